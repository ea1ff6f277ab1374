//! Seeded experiment harnesses producing mean/std error tables.
//!
//! Every realization derives its randomness from `(spec.seed, stream)` so
//! re-running a spec reproduces the same table byte for byte, regardless of
//! how realizations are scheduled across threads.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    generate_er, observed_block, perturb_related, select_hidden, GraphEnsemble, Gso, HiddenPolicy,
};
use crate::metrics::{normalized_error, per_graph_errors};
use crate::signals::{cov_poly, draw_sample_covariance, random_mrf, FilterCoeffs};
use crate::solver::{solve_reweighted, Mode, PerGraph, SolverConfig};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

/// Analytic covariance model used to generate signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovModel {
    Poly,
    Mrf,
}

impl CovModel {
    pub fn name(self) -> &'static str {
        match self {
            CovModel::Poly => "poly",
            CovModel::Mrf => "mrf",
        }
    }
}

impl FromStr for CovModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poly" => Ok(CovModel::Poly),
            "mrf" => Ok(CovModel::Mrf),
            _ => Err(Error::Parameter(format!("unknown covariance model '{s}'"))),
        }
    }
}

/// Description of one experiment run. Missing keys in a config file take
/// the defaults of [`ExperimentSpec::for_testcase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub testcase: u8,
    pub realizations: usize,
    pub seed: u64,
    /// Hidden counts (test case 1) or sample counts (test cases 2 and 3).
    pub sweep: Vec<usize>,
    pub models: Vec<Mode>,
    pub k: Vec<usize>,
    pub covariance: Vec<CovModel>,
    /// Hidden nodes for the sample sweeps.
    pub hidden: usize,
    pub n: usize,
    pub p: f64,
    pub rho: f64,
    pub filter_len: usize,
    /// Sample-covariance commutativity weight is `sample_mu_scale * sqrt(M)`.
    pub sample_mu_scale: f64,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub solver: SolverConfig,
}

impl ExperimentSpec {
    pub fn for_testcase(testcase: u8) -> Result<Self> {
        let base = ExperimentSpec {
            testcase,
            realizations: 64,
            seed: 0,
            sweep: vec![0, 1, 2, 3],
            models: vec![Mode::Pgl, Mode::Pnn, Mode::NoHidden],
            k: vec![3, 6],
            covariance: vec![CovModel::Poly],
            hidden: 1,
            n: 20,
            p: 0.2,
            rho: 0.1,
            filter_len: 3,
            sample_mu_scale: 3e5,
            dataset: None,
            output: None,
            solver: SolverConfig::default(),
        };
        match testcase {
            1 => Ok(base),
            2 => Ok(ExperimentSpec {
                realizations: 30,
                sweep: vec![100, 1_000, 10_000, 100_000, 1_000_000],
                models: vec![Mode::Pgl, Mode::NoHidden, Mode::Separate],
                k: vec![3],
                covariance: vec![CovModel::Poly, CovModel::Mrf],
                ..base
            }),
            3 => Ok(ExperimentSpec {
                realizations: 30,
                sweep: vec![100, 1_000, 10_000, 100_000, 1_000_000],
                models: vec![Mode::Pgl, Mode::Separate],
                k: vec![3],
                ..base
            }),
            _ => Err(Error::Parameter(format!("unknown test case {testcase}"))),
        }
    }

    /// Loads a TOML spec; keys absent from the file keep the test case's defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let tc = match table.get("testcase") {
            Some(v) => v
                .as_integer()
                .and_then(|i| u8::try_from(i).ok())
                .ok_or_else(|| Error::Config("testcase must be 1, 2 or 3".into()))?,
            None => return Err(Error::Config("missing key 'testcase'".into())),
        };
        let mut merged = toml::Table::try_from(Self::for_testcase(tc)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, table);
        let spec: ExperimentSpec = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reduced counts for smoke runs: at most 5 realizations, M at most 10^4.
    pub fn quick(mut self) -> Self {
        self.realizations = self.realizations.min(5);
        if self.testcase != 1 {
            self.sweep.retain(|&m| m <= 10_000);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        if self.sweep.is_empty() || self.models.is_empty() || self.k.is_empty() {
            return Err(Error::Config(
                "sweep, models and k must be non-empty".into(),
            ));
        }
        if self.testcase != 1 && self.sweep.contains(&0) {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.k.contains(&0) {
            return Err(Error::Config("K values must be positive".into()));
        }
        if self.filter_len == 0 {
            return Err(Error::Config("filter_len must be >= 1".into()));
        }
        if !(self.sample_mu_scale > 0.0) {
            return Err(Error::Config("sample_mu_scale must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn merge_tables(into: &mut toml::Table, from: toml::Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge_tables(dst, src),
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub sweep: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub schema_version: u32,
    pub testcase: u8,
    /// Name of the swept quantity: `hidden` or `samples`.
    pub sweep_axis: String,
    pub metric: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn row(&self, model: &str, k: usize, sweep: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.k == k && r.sweep == sweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        })
    }
}

/// JSON schema of the table documents written by [`emit_table`].
pub const TABLE_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "ResultTable",
  "type": "object",
  "required": ["schema_version", "testcase", "sweep_axis", "metric", "rows"],
  "additionalProperties": false,
  "properties": {
    "schema_version": {"const": 1},
    "testcase": {"enum": [1, 2, 3]},
    "sweep_axis": {"enum": ["hidden", "samples"]},
    "metric": {"type": "string"},
    "rows": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["model", "K", "sweep", "mean", "std", "n", "failed"],
        "additionalProperties": false,
        "properties": {
          "model": {"type": "string"},
          "K": {"type": "integer", "minimum": 1},
          "sweep": {"type": "integer", "minimum": 0},
          "mean": {"type": ["number", "null"], "minimum": 0},
          "std": {"type": ["number", "null"], "minimum": 0},
          "n": {"type": "integer", "minimum": 0},
          "failed": {"type": "integer", "minimum": 0}
        }
      }
    }
  }
}
"#;

pub fn table_to_csv(table: &ResultTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if table.rows.is_empty() {
        w.write_record(["model", "K", "sweep", "mean", "std", "n", "failed"])?;
    }
    for row in &table.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: PathBuf::from("<csv buffer>"),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes `table` to `path` in the given format; JSON output is accompanied
/// by `result_table.schema.json` in the same directory.
pub fn emit_table(table: &ResultTable, format: TableFormat, path: &Path) -> Result<()> {
    let body = match format {
        TableFormat::Csv => table_to_csv(table)?,
        TableFormat::Json => serde_json::to_string_pretty(table)? + "\n",
    };
    write_file(path, body.as_bytes())?;
    if format == TableFormat::Json {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        write_file(
            &dir.join("result_table.schema.json"),
            TABLE_SCHEMA.as_bytes(),
        )?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Deterministic child seed for `(base, stream)`.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    for &s in stream {
        rng.set_stream(s);
        rng = ChaCha8Rng::seed_from_u64(rng.random());
    }
    rng.random()
}

// Stream tags keep the different random draws of a realization independent.
const TAG_BASE: u64 = 1;
const TAG_PERTURB: u64 = 2;
const TAG_HIDDEN: u64 = 3;
const TAG_FILTER: u64 = 4;
const TAG_SAMPLES: u64 = 5;
const TAG_MRF: u64 = 6;

/// One outcome per (cell key, realization); `None` marks a failed solve.
type Outcome = (String, usize, usize, Option<f64>);

fn aggregate(mut outcomes: Vec<Outcome>) -> Vec<ResultRow> {
    outcomes.sort_by(|a, b| (&a.0, a.1, a.2).cmp(&(&b.0, b.1, b.2)));
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let flush = |rows: &mut Vec<ResultRow>, values: &mut Vec<f64>| {
        if let Some(row) = rows.last_mut() {
            row.n = values.len();
            row.mean = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            row.std = if values.len() < 2 {
                0.0
            } else {
                let m = row.mean;
                (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64)
                    .sqrt()
            };
        }
        values.clear();
    };
    for (model, k, sweep, err) in outcomes {
        let same = rows
            .last()
            .is_some_and(|r| r.model == model && r.k == k && r.sweep == sweep);
        if !same {
            flush(&mut rows, &mut values);
            rows.push(ResultRow {
                model,
                k,
                sweep,
                mean: 0.0,
                std: 0.0,
                n: 0,
                failed: 0,
            });
        }
        match err {
            Some(e) => values.push(e),
            None => rows.last_mut().expect("row pushed above").failed += 1,
        }
    }
    flush(&mut rows, &mut values);
    rows
}

fn related_graphs(spec: &ExperimentSpec, r: u64, k: usize) -> Result<Vec<Gso>> {
    let base = generate_er(spec.n, spec.p, derive_seed(spec.seed, &[r, TAG_BASE]))?;
    let mut graphs = vec![base.clone()];
    for i in 1..k as u64 {
        graphs.push(perturb_related(
            &base,
            spec.rho,
            derive_seed(spec.seed, &[r, TAG_PERTURB, i]),
        )?);
    }
    Ok(graphs)
}

fn poly_covariances(
    spec: &ExperimentSpec,
    graphs: &[Gso],
    r: u64,
    draw: u64,
) -> Result<Vec<DMatrix<f64>>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let seed = derive_seed(spec.seed, &[r, TAG_FILTER, draw, i as u64]);
            Ok(cov_poly(
                g,
                &FilterCoeffs::random(g, spec.filter_len, seed)?,
            ))
        })
        .collect()
}

fn analytic_covariances(
    spec: &ExperimentSpec,
    graphs: &[Gso],
    model: CovModel,
    r: u64,
) -> Result<Vec<DMatrix<f64>>> {
    match model {
        CovModel::Poly => poly_covariances(spec, graphs, r, 0),
        CovModel::Mrf => graphs
            .iter()
            .enumerate()
            .map(|(i, g)| random_mrf(g, derive_seed(spec.seed, &[r, TAG_MRF, i as u64])))
            .collect(),
    }
}

fn sampled(
    spec: &ExperimentSpec,
    full: &[DMatrix<f64>],
    m: usize,
    r: u64,
    tag: u64,
) -> Result<Vec<DMatrix<f64>>> {
    full.iter()
        .enumerate()
        .map(|(i, c)| {
            draw_sample_covariance(
                c,
                m,
                derive_seed(spec.seed, &[r, TAG_SAMPLES, tag, m as u64, i as u64]),
            )
        })
        .collect()
}

fn config_for(spec: &ExperimentSpec, mode: Mode, samples: Option<usize>) -> SolverConfig {
    let mut cfg = spec.solver.clone().with_mode(mode);
    if let Some(m) = samples {
        cfg.mu = PerGraph::Uniform(spec.sample_mu_scale * (m as f64).sqrt());
    }
    cfg
}

fn estimate(cov_o: &[DMatrix<f64>], cfg: &SolverConfig) -> Result<Vec<DMatrix<f64>>> {
    Ok(solve_reweighted(cov_o, cfg)?.s_hat)
}

fn record(cell: &str, k: usize, sweep: usize, r: u64, res: Result<f64>) -> Option<f64> {
    match res {
        Ok(e) => Some(e),
        Err(err) => {
            log::warn!("{cell} K={k} sweep={sweep} realization {r}: {err}");
            None
        }
    }
}

/// Error versus number of hidden nodes with analytic polynomial covariances.
pub fn run_testcase1(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_testcase(spec, 1)?;
    let kmax = *spec.k.iter().max().expect("validated non-empty");
    let per_real: Vec<Result<Vec<Outcome>>> = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|r| {
            // Smaller K reuse the leading graphs and filters of the largest one.
            let graphs = related_graphs(spec, r, kmax)?;
            let full = poly_covariances(spec, &graphs, r, 0)?;
            let mut out = Vec::new();
            for &h in &spec.sweep {
                let part = select_hidden(
                    spec.n,
                    h,
                    derive_seed(spec.seed, &[r, TAG_HIDDEN, h as u64]),
                    HiddenPolicy::Random,
                )?;
                for &k in &spec.k {
                    let ens = GraphEnsemble::new(graphs[..k].to_vec(), part.clone())?;
                    let truth = ens.observed_gsos();
                    let cov_o: Vec<_> =
                        full[..k].iter().map(|c| observed_block(c, &part)).collect();
                    for &mode in &spec.models {
                        let res = estimate(&cov_o, &config_for(spec, mode, None))
                            .and_then(|est| normalized_error(&truth, &est));
                        out.push((
                            mode.name().to_string(),
                            k,
                            h,
                            record(mode.name(), k, h, r, res),
                        ));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    finish_table(spec, "hidden", per_real)
}

/// Error versus sample count for each covariance model, one hidden node.
pub fn run_testcase2(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_testcase(spec, 2)?;
    let per_real: Vec<Result<Vec<Outcome>>> = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::new();
            for &k in &spec.k {
                let graphs = related_graphs(spec, r, k)?;
                let part = select_hidden(
                    spec.n,
                    spec.hidden,
                    derive_seed(spec.seed, &[r, TAG_HIDDEN]),
                    HiddenPolicy::Random,
                )?;
                let ens = GraphEnsemble::new(graphs, part.clone())?;
                let truth = ens.observed_gsos();
                for &cm in &spec.covariance {
                    let full = analytic_covariances(spec, ens.graphs(), cm, r)?;
                    for &m in &spec.sweep {
                        let cov_o: Vec<_> = sampled(spec, &full, m, r, cm as u64)?
                            .iter()
                            .map(|c| observed_block(c, &part))
                            .collect();
                        for &mode in &spec.models {
                            let label = format!("{}/{}", mode.name(), cm.name());
                            let res = estimate(&cov_o, &config_for(spec, mode, Some(m)))
                                .and_then(|est| normalized_error(&truth, &est));
                            out.push((label.clone(), k, m, record(&label, k, m, r, res)));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    finish_table(spec, "samples", per_real)
}

/// Joint versus separate estimation on a fixed ensemble (a real multilayer
/// network), with random stationary signals and one hidden node.
pub fn run_testcase3(spec: &ExperimentSpec, graphs: &[Gso]) -> Result<ResultTable> {
    expect_testcase(spec, 3)?;
    let Some(first) = graphs.first() else {
        return Err(Error::Ingest("dataset has no graphs".into()));
    };
    let n = first.n();
    let k = graphs.len();
    let per_real: Vec<Result<Vec<Outcome>>> = (0..spec.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let part = select_hidden(
                n,
                spec.hidden,
                derive_seed(spec.seed, &[r, TAG_HIDDEN]),
                HiddenPolicy::Random,
            )?;
            let ens = GraphEnsemble::new(graphs.to_vec(), part.clone())?;
            let truth = ens.observed_gsos();
            let full = poly_covariances(spec, graphs, r, 0)?;
            let mut out = Vec::new();
            for &m in &spec.sweep {
                let cov_o: Vec<_> = sampled(spec, &full, m, r, 0)?
                    .iter()
                    .map(|c| observed_block(c, &part))
                    .collect();
                for &mode in &spec.models {
                    let res = estimate(&cov_o, &config_for(spec, mode, Some(m)))
                        .and_then(|est| per_graph_errors(&truth, &est));
                    match res {
                        Ok(errs) => {
                            for (i, e) in errs.iter().enumerate() {
                                out.push((
                                    format!("{}/graph{}", mode.name(), i + 1),
                                    k,
                                    m,
                                    Some(*e),
                                ));
                            }
                            out.push((
                                mode.name().to_string(),
                                k,
                                m,
                                Some(errs.iter().sum::<f64>() / k as f64),
                            ));
                        }
                        Err(err) => {
                            log::warn!("{mode} M={m} realization {r}: {err}");
                            for i in 0..k {
                                out.push((format!("{}/graph{}", mode.name(), i + 1), k, m, None));
                            }
                            out.push((mode.name().to_string(), k, m, None));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    finish_table(spec, "samples", per_real)
}

fn expect_testcase(spec: &ExperimentSpec, tc: u8) -> Result<()> {
    spec.validate()?;
    if spec.testcase != tc {
        return Err(Error::Config(format!(
            "spec is for test case {}, not {tc}",
            spec.testcase
        )));
    }
    Ok(())
}

fn finish_table(
    spec: &ExperimentSpec,
    axis: &str,
    per_real: Vec<Result<Vec<Outcome>>>,
) -> Result<ResultTable> {
    let mut outcomes = Vec::new();
    for r in per_real {
        outcomes.extend(r?);
    }
    Ok(ResultTable {
        schema_version: TABLE_SCHEMA_VERSION,
        testcase: spec.testcase,
        sweep_axis: axis.to_string(),
        metric: "normalized_error (truth rescaled to unit first-column sum)".to_string(),
        rows: aggregate(outcomes),
    })
}
