//! Joint estimation of observed GSO blocks and lifting matrices.
//!
//! [`solve_inner`] solves the weighted convex program for fixed weights;
//! [`solve_reweighted`] wraps it in the reweighted-l1 loop.

mod admm;
mod config;
mod objective;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use config::{AdmmConfig, Mode, PerGraph, PerPair, Resolved, SolverConfig};
pub use objective::{initial_gso, objective_value, ones_offdiag, update_weights};

use crate::error::{Error, Result};
use crate::graph::DenseMatrixJson;

/// Diagnostics of one outer (reweighting) iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Weighted objective at the returned point.
    pub objective: f64,
    /// Objective with the weighted term replaced by the log penalty.
    pub log_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub admm_iters: usize,
    pub rho: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub s_hat: Vec<DMatrix<f64>>,
    pub p_hat: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

/// Starting point for an inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub s: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    /// Penalty parameters (S copies, P copies) per coupled group; `None`
    /// uses the configured value.
    pub rho: Option<Vec<[f64; 2]>>,
}

fn validate_inputs(cov: &[DMatrix<f64>], weights: &[DMatrix<f64>]) -> Result<usize> {
    let Some(first) = cov.first() else {
        return Err(Error::Input("no covariance matrices given".into()));
    };
    let o = first.nrows();
    if o < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 observed nodes, got {o}"
        )));
    }
    if weights.len() != cov.len() {
        return Err(Error::Dimension(format!(
            "{} weight matrices for {} graphs",
            weights.len(),
            cov.len()
        )));
    }
    for (k, c) in cov.iter().enumerate() {
        if c.shape() != (o, o) {
            return Err(Error::Dimension(format!(
                "covariance {k} has shape {:?}",
                c.shape()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "covariance {k} has non-finite entries"
            )));
        }
        let scale = c.amax().max(f64::MIN_POSITIVE);
        if (c - c.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Input(format!("covariance {k} is not symmetric")));
        }
    }
    for (k, w) in weights.iter().enumerate() {
        if w.shape() != (o, o) {
            return Err(Error::Dimension(format!(
                "weights {k} have shape {:?}",
                w.shape()
            )));
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Input(format!(
                "weights {k} must be strictly positive"
            )));
        }
    }
    Ok(o)
}

/// Solves the weighted program from the default starting point.
pub fn solve_inner(
    cov: &[DMatrix<f64>],
    weights: &[DMatrix<f64>],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    solve_inner_from(cov, weights, cfg, None).map(|(res, _)| res)
}

/// Solves the weighted program; returns the result and a warm start for a
/// subsequent solve.
pub fn solve_inner_from(
    cov: &[DMatrix<f64>],
    weights: &[DMatrix<f64>],
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(SolverResult, WarmStart)> {
    let o = validate_inputs(cov, weights)?;
    let k = cov.len();
    let resolved = cfg.resolve(k)?;
    let (start_s, start_p) = match warm {
        Some(w) if w.s.len() == k && w.p.len() == k => (w.s.clone(), w.p.clone()),
        Some(_) => {
            return Err(Error::Dimension(
                "warm start has the wrong number of graphs".into(),
            ))
        }
        None => (vec![initial_gso(o); k], vec![DMatrix::zeros(o, o); k]),
    };

    let groups = resolved.components();
    let mut s_hat = vec![DMatrix::zeros(o, o); k];
    let mut p_hat = vec![DMatrix::zeros(o, o); k];
    let mut record = IterationRecord {
        iteration: 1,
        objective: 0.0,
        log_objective: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        admm_iters: 0,
        rho: 0.0,
        converged: true,
    };
    let mut rhos = Vec::with_capacity(groups.len());
    for (gi, idx) in groups.iter().enumerate() {
        let pick = |m: &[DMatrix<f64>]| idx.iter().map(|&i| m[i].clone()).collect::<Vec<_>>();
        let rho0 = warm
            .and_then(|w| w.rho.as_ref())
            .and_then(|r| r.get(gi).copied())
            .unwrap_or([cfg.admm.rho; 2]);
        let out = admm::solve_group(
            &pick(cov),
            &pick(weights),
            &resolved.subset(idx),
            &cfg.admm,
            &pick(&start_s),
            &pick(&start_p),
            rho0,
        )?;
        for (pos, &i) in idx.iter().enumerate() {
            s_hat[i] = out.s[pos].clone();
            p_hat[i] = out.p[pos].clone();
        }
        record.primal_residual = record.primal_residual.max(out.primal);
        record.dual_residual = record.dual_residual.max(out.dual);
        record.admm_iters = record.admm_iters.max(out.iterations);
        record.rho = record.rho.max(out.rho[0]);
        record.converged &= out.converged;
        rhos.push(out.rho);
    }
    record.objective = objective::objective_resolved(&s_hat, &p_hat, cov, weights, &resolved);
    record.log_objective = objective::log_objective(&s_hat, &p_hat, cov, &resolved, cfg.delta);
    let warm_out = WarmStart {
        s: s_hat.clone(),
        p: p_hat.clone(),
        rho: Some(rhos),
    };
    Ok((
        SolverResult {
            objective: record.objective,
            converged: record.converged,
            history: vec![record],
            s_hat,
            p_hat,
        },
        warm_out,
    ))
}

/// Reweighted-l1 loop: `outer_iters` rounds of weight update then inner
/// solve, each warm-started from the previous solution.
pub fn solve_reweighted(cov: &[DMatrix<f64>], cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.resolve(cov.len())?;
    let o = cov.first().map(|c| c.nrows()).unwrap_or(0);
    let mut prev_s = vec![ones_offdiag(o); cov.len()];
    let mut warm: Option<WarmStart> = None;
    let mut history = Vec::with_capacity(cfg.outer_iters);
    let mut last: Option<SolverResult> = None;
    for t in 1..=cfg.outer_iters {
        let weights = update_weights(&prev_s, cfg.delta)?;
        let (mut res, next) = solve_inner_from(cov, &weights, cfg, warm.as_ref())?;
        let mut rec = res
            .history
            .pop()
            .expect("inner solve records one iteration");
        rec.iteration = t;
        log::debug!(
            "outer {t}: objective {:.6e}, admm iters {}, residuals {:.2e}/{:.2e}",
            rec.objective,
            rec.admm_iters,
            rec.primal_residual,
            rec.dual_residual
        );
        history.push(rec);
        prev_s = res.s_hat.clone();
        warm = Some(next);
        last = Some(res);
    }
    let mut res = last.expect("outer_iters >= 1");
    res.converged = history.iter().all(|h| h.converged);
    res.history = history;
    Ok(res)
}

/// Serialized form of a solve: inputs and outputs in one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub s_hat: Vec<DenseMatrixJson>,
    pub p_hat: Vec<DenseMatrixJson>,
    pub objective: f64,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl From<&SolverResult> for SolveRecord {
    fn from(r: &SolverResult) -> Self {
        SolveRecord {
            s_hat: r.s_hat.iter().map(DenseMatrixJson::from_matrix).collect(),
            p_hat: r.p_hat.iter().map(DenseMatrixJson::from_matrix).collect(),
            objective: r.objective,
            converged: r.converged,
            history: r.history.clone(),
        }
    }
}
