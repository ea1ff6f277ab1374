//! JSON documents exchanged with the command line and with the reference
//! fixtures: problem files, solver fixtures and prox fixtures.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DenseMatrixJson, NodePartition};
use crate::prox;
use crate::solver::{objective_value, solve_inner, solve_reweighted, SolverConfig, SolverResult};

pub const SCHEMA_VERSION: u32 = 1;

fn to_matrices(ms: &[DenseMatrixJson]) -> Result<Vec<DMatrix<f64>>> {
    ms.iter().map(DenseMatrixJson::to_matrix).collect()
}

fn to_json(ms: &[DMatrix<f64>]) -> Vec<DenseMatrixJson> {
    ms.iter().map(DenseMatrixJson::from_matrix).collect()
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Input(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Input of a solve: observed covariances plus optional extras.
///
/// With `weights` present the single weighted program is solved; without,
/// the full reweighting loop runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub schema_version: u32,
    pub covariances: Vec<DenseMatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<DenseMatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<NodePartition>,
    /// Observed blocks of the true GSOs, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<DenseMatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SolverConfig>,
}

impl Problem {
    pub fn new(covariances: &[DMatrix<f64>]) -> Self {
        Problem {
            schema_version: SCHEMA_VERSION,
            covariances: to_json(covariances),
            weights: None,
            partition: None,
            truth: None,
            config: None,
        }
    }

    pub fn covariance_matrices(&self) -> Result<Vec<DMatrix<f64>>> {
        to_matrices(&self.covariances)
    }

    pub fn weight_matrices(&self) -> Result<Option<Vec<DMatrix<f64>>>> {
        self.weights.as_deref().map(to_matrices).transpose()
    }

    pub fn truth_matrices(&self) -> Result<Option<Vec<DMatrix<f64>>>> {
        self.truth.as_deref().map(to_matrices).transpose()
    }

    /// Runs the solve this problem describes under `cfg`.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<SolverResult> {
        check_version(self.schema_version)?;
        let cov = self.covariance_matrices()?;
        match self.weight_matrices()? {
            Some(w) => solve_inner(&cov, &w, cfg),
            None => solve_reweighted(&cov, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub objective: f64,
    pub s: Vec<DenseMatrixJson>,
    pub p: Vec<DenseMatrixJson>,
}

/// Reference optimum of one weighted program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverFixture {
    pub schema_version: u32,
    pub name: String,
    pub problem: Problem,
    pub optimum: Optimum,
    /// Relative objective tolerance.
    pub tolerance: f64,
    #[serde(default)]
    pub generator: Option<String>,
}

/// Reference value of one proximal operator or projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxFixture {
    pub schema_version: u32,
    pub name: String,
    /// One of `soft_threshold`, `group_soft_threshold`,
    /// `stacked_group_soft_threshold`, `svd_soft_threshold`,
    /// `project_feasible`, `project_simplex`.
    pub operator: String,
    #[serde(default)]
    pub tau: f64,
    /// Row-major nested arrays; a vector is a single row.
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub outputs: Vec<Vec<Vec<f64>>>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fixture {
    Solver(SolverFixture),
    Prox(ProxFixture),
}

impl Fixture {
    pub fn name(&self) -> &str {
        match self {
            Fixture::Solver(f) => &f.name,
            Fixture::Prox(f) => &f.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCheck {
    pub name: String,
    pub expected: f64,
    pub got: f64,
    /// Relative objective gap (solver) or max abs deviation (prox).
    pub deviation: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub converged: bool,
}

impl FixtureCheck {
    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

fn nested_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Input("ragged matrix in fixture".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn check_solver_fixture(fx: &SolverFixture) -> Result<FixtureCheck> {
    check_version(fx.schema_version)?;
    let cfg = fx.problem.config.clone().unwrap_or_default();
    let cov = fx.problem.covariance_matrices()?;
    let w = fx
        .problem
        .weight_matrices()?
        .ok_or_else(|| Error::Input(format!("fixture {} has no weights", fx.name)))?;
    let start = Instant::now();
    let res = solve_inner(&cov, &w, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let got = objective_value(&res.s_hat, &res.p_hat, &cov, &w, &cfg)?;
    let expected = fx.optimum.objective;
    Ok(FixtureCheck {
        name: fx.name.clone(),
        expected,
        got,
        deviation: (got - expected).abs() / expected.abs().max(1e-12),
        tolerance: fx.tolerance,
        seconds,
        converged: res.converged,
    })
}

pub fn check_prox_fixture(fx: &ProxFixture) -> Result<FixtureCheck> {
    check_version(fx.schema_version)?;
    let inputs = fx
        .inputs
        .iter()
        .map(|m| nested_to_matrix(m))
        .collect::<Result<Vec<_>>>()?;
    let expected = fx
        .outputs
        .iter()
        .map(|m| nested_to_matrix(m))
        .collect::<Result<Vec<_>>>()?;
    let arity = |n: usize| {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "{} expects {n} input(s)",
                fx.operator
            )))
        }
    };
    let start = Instant::now();
    let got: Vec<DMatrix<f64>> = match fx.operator.as_str() {
        "soft_threshold" => {
            arity(1)?;
            vec![prox::soft_threshold(&inputs[0], fx.tau)]
        }
        "group_soft_threshold" => {
            arity(1)?;
            vec![prox::group_soft_threshold(&inputs[0], fx.tau)]
        }
        "stacked_group_soft_threshold" => {
            arity(2)?;
            let (a, b) = prox::stacked_group_soft_threshold(&inputs[0], &inputs[1], fx.tau)?;
            vec![a, b]
        }
        "svd_soft_threshold" => {
            arity(1)?;
            vec![prox::svd_soft_threshold(&inputs[0], fx.tau)?]
        }
        "project_feasible" => {
            arity(1)?;
            vec![prox::project_feasible(&inputs[0])?]
        }
        "project_simplex" => {
            arity(1)?;
            let x: Vec<f64> = inputs[0].iter().copied().collect();
            let z = prox::project_simplex(&x);
            vec![DMatrix::from_row_slice(1, z.len(), &z)]
        }
        other => return Err(Error::Input(format!("unknown prox operator '{other}'"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    if got.len() != expected.len()
        || got
            .iter()
            .zip(&expected)
            .any(|(g, e)| g.shape() != e.shape())
    {
        return Err(Error::Dimension(format!(
            "fixture {}: output shapes differ",
            fx.name
        )));
    }
    let deviation = got
        .iter()
        .zip(&expected)
        .map(|(g, e)| (g - e).amax())
        .fold(0.0, f64::max);
    Ok(FixtureCheck {
        name: fx.name.clone(),
        expected: 0.0,
        got: deviation,
        deviation,
        tolerance: fx.tolerance,
        seconds,
        converged: true,
    })
}

pub fn check_fixture(fx: &Fixture) -> Result<FixtureCheck> {
    match fx {
        Fixture::Solver(f) => check_solver_fixture(f),
        Fixture::Prox(f) => check_prox_fixture(f),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    crate::experiments::write_file(path, text.as_bytes())
}

/// All `*.json` fixtures in `dir`, sorted by file name.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<(PathBuf, Fixture)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let fx = read_json(&p)?;
            Ok((p, fx))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prox_fixture_scalar_cases() {
        let fx = ProxFixture {
            schema_version: 1,
            name: "l1".into(),
            operator: "soft_threshold".into(),
            tau: 1.0,
            inputs: vec![vec![vec![3.0, -0.5]]],
            outputs: vec![vec![vec![2.0, 0.0]]],
            tolerance: 1e-12,
        };
        assert!(check_prox_fixture(&fx).unwrap().passed());
        let group = ProxFixture {
            operator: "group_soft_threshold".into(),
            tau: 2.5,
            inputs: vec![vec![vec![3.0], vec![4.0]]],
            outputs: vec![vec![vec![1.5], vec![2.0]]],
            ..fx.clone()
        };
        assert!(check_prox_fixture(&group).unwrap().passed());
        let bad = ProxFixture {
            operator: "nope".into(),
            ..fx
        };
        assert!(check_prox_fixture(&bad).is_err());
    }

    #[test]
    fn fixture_json_is_tagged() {
        let fx = Fixture::Prox(ProxFixture {
            schema_version: 1,
            name: "x".into(),
            operator: "project_simplex".into(),
            tau: 0.0,
            inputs: vec![vec![vec![0.2, 0.2]]],
            outputs: vec![vec![vec![0.5, 0.5]]],
            tolerance: 1e-12,
        });
        let text = serde_json::to_string(&fx).unwrap();
        assert!(text.contains("\"kind\":\"prox\""));
        let back: Fixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fx);
        assert!(check_fixture(&back).unwrap().passed());
    }

    #[test]
    fn problem_round_trip_and_version() {
        let cov = vec![DMatrix::<f64>::identity(3, 3)];
        let mut p = Problem::new(&cov);
        let text = serde_json::to_string(&p).unwrap();
        assert!(!text.contains("weights\":null"));
        let back: Problem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        p.schema_version = 9;
        assert!(check_version(p.schema_version).is_err());
    }
}
