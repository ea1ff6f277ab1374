//! Command-line front end (`jtopo`).
//!
//! Exit codes: 0 success, 2 usage or input error, 3 non-convergence (or a
//! fixture that misses its reference value).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiments::{
    emit_table, run_testcase1, run_testcase2, run_testcase3, ExperimentSpec, TableFormat,
};
use crate::fixtures::{check_fixture, load_fixture_dir, read_json, write_json, Fixture, Problem};
use crate::graph::{
    generate_ensemble, observed_block, EnsembleParams, GraphEnsemble, HiddenPolicy,
};
use crate::metrics::normalized_error;
use crate::pajek::{from_ensemble, load_dataset, to_pajek_string, IngestOptions};
use crate::signals::{
    cov_poly, draw_sample_covariance, random_mrf, CovarianceKind, CovarianceSet, FilterCoeffs,
};
use crate::solver::{Mode, PerGraph, PerPair, SolveRecord, SolverConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "JTOPO_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "jtopo",
    version,
    about = "Joint topology inference with hidden nodes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ensemble, its covariances and a problem file.
    Gen(GenArgs),
    /// Solve a problem (or solver fixture) file.
    Solve(SolveArgs),
    /// Run one of the three experiment harnesses.
    Experiment(ExperimentArgs),
    /// Convert between Pajek (.net or .toml manifest) and ensemble JSON.
    Convert(ConvertArgs),
    /// Check every fixture in a directory against the solver.
    FixturesCheck(FixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Poly,
    Mrf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Edge flip probability of the related graphs.
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Number of hidden nodes.
    #[arg(long, default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value = "random")]
    pub policy: HiddenPolicy,
    #[arg(long, value_enum, default_value = "poly")]
    pub cov: CovArg,
    /// Sample count; omit for analytic covariances.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub filter_len: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output directory (default: $JTOPO_OUTPUT_DIR or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SolverFlags {
    /// TOML file with solver settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl SolverFlags {
    /// `base`, then the config file, then individual flags.
    pub fn apply(&self, base: SolverConfig) -> Result<SolverConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
                let mut merged =
                    toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
                crate::experiments::merge_tables(&mut merged, file);
                merged.try_into().map_err(|e: toml::de::Error| {
                    Error::Config(format!("{}: {e}", path.display()))
                })?
            }
            None => base,
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(x) = self.alpha {
            cfg.alpha = PerGraph::Uniform(x);
        }
        if let Some(x) = self.beta {
            cfg.beta = PerPair::Uniform(x);
        }
        if let Some(x) = self.gamma {
            cfg.gamma = PerGraph::Uniform(x);
        }
        if let Some(x) = self.eta {
            cfg.eta = PerPair::Uniform(x);
        }
        if let Some(x) = self.mu {
            cfg.mu = PerGraph::Uniform(x);
        }
        if let Some(x) = self.delta {
            cfg.delta = x;
        }
        if let Some(x) = self.outer_iters {
            cfg.outer_iters = x;
        }
        if let Some(x) = self.max_iters {
            cfg.admm.max_iters = x;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem JSON, or a solver fixture.
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Result JSON path (default: <output dir>/result.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Test case: 1 (hidden sweep), 2 (sample sweep), 3 (real ensemble).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub tc: u8,
    /// TOML experiment spec; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated sweep values (hidden or sample counts).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    /// Comma-separated ensemble sizes.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Pajek file or manifest for test case 3.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// At most 5 realizations and M at most 10^4.
    #[arg(long)]
    pub quick: bool,
    /// Output directory (default: spec, then $JTOPO_OUTPUT_DIR, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Keep arcs directed (fails unless the input is symmetric).
    #[arg(long)]
    pub no_symmetrize: bool,
    /// Keep edge weights.
    #[arg(long)]
    pub no_binarize: bool,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    pub dir: PathBuf,
}

fn default_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Convert(a) => cmd_convert(a),
        Command::FixturesCheck(a) => cmd_fixtures_check(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<i32> {
    let params = EnsembleParams {
        n: a.n,
        p: a.p,
        k: a.k,
        rho: a.rho,
        hidden: a.h,
        policy: a.policy,
    };
    let ens = generate_ensemble(&params, a.seed)?;
    let mut full = Vec::with_capacity(ens.k());
    for (i, g) in ens.graphs().iter().enumerate() {
        let seed = a.seed.wrapping_add(1000 + i as u64);
        full.push(match a.cov {
            CovArg::Poly => cov_poly(g, &FilterCoeffs::random(g, a.filter_len, seed)?),
            CovArg::Mrf => random_mrf(g, seed)?,
        });
    }
    let (kind, matrices, counts) = match a.m {
        Some(m) => {
            let sampled = full
                .iter()
                .enumerate()
                .map(|(i, c)| draw_sample_covariance(c, m, a.seed.wrapping_add(2000 + i as u64)))
                .collect::<Result<Vec<_>>>()?;
            (CovarianceKind::Sample, sampled, Some(vec![m; ens.k()]))
        }
        None => {
            let kind = match a.cov {
                CovArg::Poly => CovarianceKind::AnalyticPoly,
                CovArg::Mrf => CovarianceKind::AnalyticMrf,
            };
            (kind, full, None)
        }
    };
    let mut covs = CovarianceSet::new(kind, matrices)?;
    covs.sample_counts = counts;

    let part = ens.partition();
    let observed: Vec<_> = covs
        .matrices
        .iter()
        .map(|c| observed_block(c, part))
        .collect();
    let mut problem = Problem::new(&observed);
    problem.partition = Some(part.clone());
    problem.truth = Some(
        ens.observed_gsos()
            .iter()
            .map(crate::graph::DenseMatrixJson::from_matrix)
            .collect(),
    );

    let dir = default_out(a.out);
    write_json(&dir.join("ensemble.json"), &ens)?;
    write_json(&dir.join("covariances.json"), &covs)?;
    write_json(&dir.join("problem.json"), &problem)?;
    println!(
        "wrote ensemble.json, covariances.json, problem.json to {}",
        dir.display()
    );
    Ok(EXIT_OK)
}

fn format_matrix(m: &nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter()
                    .map(|v| format!("{:.6}", v + 0.0))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn cmd_solve(a: SolveArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", a.input.display())))?;
    let (problem, reference) = if value.get("kind").is_some() {
        match serde_json::from_value::<Fixture>(value)? {
            Fixture::Solver(f) => (f.problem, Some(f.optimum.objective)),
            Fixture::Prox(_) => return Err(Error::Input("prox fixtures cannot be solved".into())),
        }
    } else {
        (serde_json::from_value::<Problem>(value)?, None)
    };
    let cfg = a.solver.apply(problem.config.clone().unwrap_or_default())?;
    let res = problem.solve(&cfg)?;

    let last = res.history.last().expect("at least one iteration");
    println!("mode: {}", cfg.mode);
    println!("objective: {:.10e}", res.objective);
    println!(
        "residuals: primal {:.3e} dual {:.3e} after {} ADMM iterations",
        last.primal_residual, last.dual_residual, last.admm_iters
    );
    if let Some(r) = reference {
        println!(
            "reference objective: {r:.10e} (relative gap {:.3e})",
            (res.objective - r).abs() / r.abs()
        );
    }
    if let Some(truth) = problem.truth_matrices()? {
        println!(
            "normalized error: {:.6}",
            normalized_error(&truth, &res.s_hat)?
        );
    }
    if res.s_hat[0].nrows() <= 8 {
        for (k, s) in res.s_hat.iter().enumerate() {
            println!("s_hat[{k}] = {}", format_matrix(s));
        }
    }
    let out = a
        .out
        .unwrap_or_else(|| default_out(None).join("result.json"));
    write_json(&out, &SolveRecord::from(&res))?;
    println!("converged: {}", res.converged);
    Ok(if res.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn load_spec(a: &ExperimentArgs) -> Result<ExperimentSpec> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let spec = ExperimentSpec::from_toml(&text)?;
            if spec.testcase != a.tc {
                return Err(Error::Config(format!(
                    "{} describes test case {}, but --tc {} was given",
                    path.display(),
                    spec.testcase,
                    a.tc
                )));
            }
            spec
        }
        None => ExperimentSpec::for_testcase(a.tc)?,
    };
    if let Some(r) = a.realizations {
        spec.realizations = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = &a.sweep {
        spec.sweep = s.clone();
    }
    if let Some(k) = &a.k {
        spec.k = k.clone();
    }
    if let Some(d) = &a.dataset {
        spec.dataset = Some(d.clone());
    }
    if let Some(o) = &a.out {
        spec.output = Some(o.clone());
    }
    if a.quick {
        spec = spec.quick();
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<i32> {
    let spec = load_spec(&a)?;
    let table = match spec.testcase {
        1 => run_testcase1(&spec)?,
        2 => run_testcase2(&spec)?,
        _ => {
            let Some(path) = &spec.dataset else {
                return Err(Error::Input(
                    "test case 3 needs --dataset <file.net|manifest.toml>".into(),
                ));
            };
            let ens = load_dataset(path, IngestOptions::default())?;
            run_testcase3(&spec, ens.graphs())?
        }
    };
    let dir = default_out(spec.output.clone());
    let stem = format!("testcase{}", spec.testcase);
    emit_table(&table, TableFormat::Csv, &dir.join(format!("{stem}.csv")))?;
    emit_table(&table, TableFormat::Json, &dir.join(format!("{stem}.json")))?;
    for row in &table.rows {
        println!(
            "{:<20} K={:<2} sweep={:<8} mean={:.4} std={:.4} n={} failed={}",
            row.model, row.k, row.sweep, row.mean, row.std, row.n, row.failed
        );
    }
    println!("wrote {stem}.csv and {stem}.json to {}", dir.display());
    Ok(EXIT_OK)
}

fn is_json(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn cmd_convert(a: ConvertArgs) -> Result<i32> {
    let opts = IngestOptions {
        symmetrize: !a.no_symmetrize,
        binarize: !a.no_binarize,
    };
    let ens: GraphEnsemble = if is_json(&a.input) {
        read_json(&a.input)?
    } else {
        load_dataset(&a.input, opts)?
    };
    if is_json(&a.output) {
        write_json(&a.output, &ens)?;
    } else {
        let name = a.input.file_stem().and_then(|s| s.to_str());
        crate::experiments::write_file(
            &a.output,
            to_pajek_string(&from_ensemble(&ens, name)).as_bytes(),
        )?;
    }
    println!(
        "{} graphs on {} nodes -> {}",
        ens.k(),
        ens.n(),
        a.output.display()
    );
    Ok(EXIT_OK)
}

fn cmd_fixtures_check(a: FixturesArgs) -> Result<i32> {
    let all = load_fixture_dir(&a.dir)?;
    if all.is_empty() {
        return Err(Error::Input(format!("no fixtures in {}", a.dir.display())));
    }
    let mut failed = 0;
    for (_, fx) in &all {
        let c = check_fixture(fx)?;
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<4} {:<34} deviation {:.3e} tol {:.0e} {:.3}s",
            verdict, c.name, c.deviation, c.tolerance, c.seconds
        );
        failed += usize::from(!c.passed());
    }
    println!("{} fixtures, {} failed", all.len(), failed);
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}
