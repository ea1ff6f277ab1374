use nalgebra::DMatrix;

use super::config::{Mode, Resolved, SolverConfig};
use crate::error::{Error, Result};
use crate::prox::{commutator_with_lift, l1_norm, l21_norm, nuclear_norm, stacked_l21_norm};

/// Reweighting rule `W_ij = 1 / (S_ij + delta)`.
pub fn update_weights(prev_s: &[DMatrix<f64>], delta: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(delta > 0.0) {
        return Err(Error::Contract(format!(
            "delta must be positive, got {delta}"
        )));
    }
    prev_s
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if let Some(v) = s.iter().find(|&&v| v < 0.0 || v.is_nan()) {
                return Err(Error::Contract(format!("graph {k} has negative entry {v}")));
            }
            Ok(s.map(|v| 1.0 / (v + delta)))
        })
        .collect()
}

/// All-ones off-diagonal matrix: the reweighting seed of the first outer iteration.
pub fn ones_offdiag(o: usize) -> DMatrix<f64> {
    DMatrix::from_fn(o, o, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// Starting point inside the feasible set: every off-diagonal entry `1 / (O - 1)`.
pub fn initial_gso(o: usize) -> DMatrix<f64> {
    ones_offdiag(o) / (o.max(2) - 1) as f64
}

/// Objective of the weighted convex program at `(s, p)`.
pub fn objective_value(
    s: &[DMatrix<f64>],
    p: &[DMatrix<f64>],
    cov: &[DMatrix<f64>],
    weights: &[DMatrix<f64>],
    cfg: &SolverConfig,
) -> Result<f64> {
    let r = cfg.resolve(s.len())?;
    if p.len() != s.len() || cov.len() != s.len() || weights.len() != s.len() {
        return Err(Error::Dimension(
            "per-graph inputs must all have K entries".into(),
        ));
    }
    Ok(objective_resolved(s, p, cov, weights, &r))
}

pub(crate) fn objective_resolved(
    s: &[DMatrix<f64>],
    p: &[DMatrix<f64>],
    cov: &[DMatrix<f64>],
    weights: &[DMatrix<f64>],
    r: &Resolved,
) -> f64 {
    smooth_and_pair_terms(s, p, cov, r)
        + (0..r.k)
            .map(|k| r.alpha[k] * weights[k].dot(&s[k]))
            .sum::<f64>()
}

/// Same program with the linear reweighted term replaced by the log penalty
/// `alpha * sum log(S_ij + delta)` it majorizes; non-increasing across
/// reweighting steps when inner solves are exact.
pub(crate) fn log_objective(
    s: &[DMatrix<f64>],
    p: &[DMatrix<f64>],
    cov: &[DMatrix<f64>],
    r: &Resolved,
    delta: f64,
) -> f64 {
    smooth_and_pair_terms(s, p, cov, r)
        + (0..r.k)
            .map(|k| r.alpha[k] * s[k].iter().map(|v| (v.max(0.0) + delta).ln()).sum::<f64>())
            .sum::<f64>()
}

fn smooth_and_pair_terms(
    s: &[DMatrix<f64>],
    p: &[DMatrix<f64>],
    cov: &[DMatrix<f64>],
    r: &Resolved,
) -> f64 {
    let mut total = 0.0;
    for k in 0..r.k {
        total += r.mu[k] * commutator_with_lift(&cov[k], &s[k], &p[k]).norm_squared();
        total += match r.mode {
            Mode::Pgl | Mode::Separate => r.gamma[k] * l21_norm(&p[k]),
            Mode::Pnn => r.gamma[k] * nuclear_norm(&p[k]),
            Mode::NoHidden => 0.0,
        };
    }
    for (i, j, b) in Resolved::active_pairs(&r.beta) {
        total += b * l1_norm(&(&s[i] - &s[j]));
    }
    for (i, j, e) in Resolved::active_pairs(&r.eta) {
        total += e * stacked_l21_norm(&p[i], &p[j]);
    }
    total
}
