use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which penalty structure is placed on the lifting matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Column group-Lasso per graph plus stacked group-Lasso per pair.
    Pgl,
    /// Nuclear norm per graph, no lifting coupling.
    Pnn,
    /// Lifting matrices pinned to zero.
    NoHidden,
    /// Each graph solved on its own.
    Separate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pgl => "PGL",
            Mode::Pnn => "PNN",
            Mode::NoHidden => "NO_HIDDEN",
            Mode::Separate => "SEPARATE",
        }
    }

    pub fn has_lift(self) -> bool {
        !matches!(self, Mode::NoHidden)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PGL" => Ok(Mode::Pgl),
            "PNN" => Ok(Mode::Pnn),
            "NO_HIDDEN" | "NOHIDDEN" => Ok(Mode::NoHidden),
            "SEPARATE" => Ok(Mode::Separate),
            other => Err(Error::Parameter(format!("unknown solver mode '{other}'"))),
        }
    }
}

/// A per-graph coefficient: one value shared by every graph or one per graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerGraph {
    Uniform(f64),
    Values(Vec<f64>),
}

impl PerGraph {
    fn resolve(&self, k: usize, name: &str) -> Result<Vec<f64>> {
        let v = match self {
            PerGraph::Uniform(x) => vec![*x; k],
            PerGraph::Values(v) if v.len() == k => v.clone(),
            PerGraph::Values(v) => {
                return Err(Error::Parameter(format!(
                    "{name} has {} entries for K = {k}",
                    v.len()
                )))
            }
        };
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Parameter(format!(
                "{name} must be finite and nonnegative"
            )));
        }
        Ok(v)
    }
}

/// A pairwise coefficient stored upper-triangular; the diagonal and lower
/// triangle are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPair {
    Uniform(f64),
    Upper(Vec<Vec<f64>>),
}

impl PerPair {
    fn resolve(&self, k: usize, name: &str) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; k]; k];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
                let x = match self {
                    PerPair::Uniform(x) => *x,
                    PerPair::Upper(m) => {
                        if m.len() != k || m.iter().any(|r| r.len() != k) {
                            return Err(Error::Parameter(format!("{name} must be {k}x{k}")));
                        }
                        m[i][j]
                    }
                };
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "{name} must be finite and nonnegative"
                    )));
                }
                *slot = x;
            }
        }
        Ok(out)
    }
}

/// Controls of the inner splitting solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    /// Initial penalty parameter.
    pub rho: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Residual balancing: rescale rho when one residual exceeds the other by this ratio.
    pub balance_ratio: f64,
    /// Iterations between residual-balancing checks; 0 disables adaptation.
    pub balance_every: usize,
    /// Over-relaxation factor in (0, 2); 1 is plain ADMM.
    pub relaxation: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            max_iters: 2000,
            primal_tol: 1e-5,
            dual_tol: 1e-5,
            balance_ratio: 10.0,
            balance_every: 10,
            relaxation: 1.6,
        }
    }
}

/// Hyperparameters of the joint program and its reweighting loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: PerGraph,
    pub beta: PerPair,
    pub gamma: PerGraph,
    pub eta: PerPair,
    pub mu: PerGraph,
    pub delta: f64,
    pub outer_iters: usize,
    pub mode: Mode,
    pub admm: AdmmConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: PerGraph::Uniform(1.0),
            beta: PerPair::Uniform(10.0),
            gamma: PerGraph::Uniform(3e3),
            eta: PerPair::Uniform(1.5e4),
            mu: PerGraph::Uniform(1e8),
            delta: 1e-3,
            outer_iters: 5,
            mode: Mode::Pgl,
            admm: AdmmConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Expands shorthand coefficients for `k` graphs and applies the mode's
    /// restrictions.
    pub fn resolve(&self, k: usize) -> Result<Resolved> {
        if k == 0 {
            return Err(Error::Parameter("at least one graph is required".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.outer_iters == 0 {
            return Err(Error::Parameter("outer_iters must be >= 1".into()));
        }
        let a = &self.admm;
        if !(a.rho > 0.0 && a.rho.is_finite()) {
            return Err(Error::Parameter(format!(
                "ADMM rho must be positive, got {}",
                a.rho
            )));
        }
        if !(a.primal_tol > 0.0 && a.dual_tol > 0.0) {
            return Err(Error::Parameter("ADMM tolerances must be positive".into()));
        }
        if !(a.relaxation > 0.0 && a.relaxation < 2.0) {
            return Err(Error::Parameter(format!(
                "ADMM relaxation must lie in (0, 2), got {}",
                a.relaxation
            )));
        }
        if a.max_iters == 0 {
            return Err(Error::Parameter("ADMM max_iters must be >= 1".into()));
        }
        let mut r = Resolved {
            k,
            alpha: self.alpha.resolve(k, "alpha")?,
            beta: self.beta.resolve(k, "beta")?,
            gamma: self.gamma.resolve(k, "gamma")?,
            eta: self.eta.resolve(k, "eta")?,
            mu: self.mu.resolve(k, "mu")?,
            mode: self.mode,
        };
        match self.mode {
            Mode::Separate => {
                zero_pairs(&mut r.beta);
                zero_pairs(&mut r.eta);
            }
            Mode::NoHidden => {
                r.gamma.iter_mut().for_each(|g| *g = 0.0);
                zero_pairs(&mut r.eta);
            }
            Mode::Pnn => zero_pairs(&mut r.eta),
            Mode::Pgl => {}
        }
        Ok(r)
    }
}

fn zero_pairs(m: &mut [Vec<f64>]) {
    m.iter_mut().flatten().for_each(|x| *x = 0.0);
}

/// Coefficients expanded for a concrete number of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub k: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub mode: Mode,
}

impl Resolved {
    /// Pairs `(k, l)`, `k < l`, with a nonzero coefficient in `m`.
    pub fn active_pairs(m: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
        let k = m.len();
        (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .filter_map(|(i, j)| (m[i][j] > 0.0).then_some((i, j, m[i][j])))
            .collect()
    }

    /// Groups of graphs linked by an active pairwise term; groups are solved
    /// independently.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.k).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (i, j, _) in Self::active_pairs(&self.beta)
            .into_iter()
            .chain(Self::active_pairs(&self.eta))
        {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_of = vec![usize::MAX; self.k];
        for i in 0..self.k {
            let r = find(&mut parent, i);
            if root_of[r] == usize::MAX {
                root_of[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_of[r]].push(i);
        }
        groups
    }

    /// Restriction to a subset of graphs.
    pub fn subset(&self, idx: &[usize]) -> Resolved {
        Resolved {
            k: idx.len(),
            alpha: idx.iter().map(|&i| self.alpha[i]).collect(),
            beta: idx
                .iter()
                .map(|&i| idx.iter().map(|&j| self.beta[i][j]).collect())
                .collect(),
            gamma: idx.iter().map(|&i| self.gamma[i]).collect(),
            eta: idx
                .iter()
                .map(|&i| idx.iter().map(|&j| self.eta[i][j]).collect())
                .collect(),
            mu: idx.iter().map(|&i| self.mu[i]).collect(),
            mode: self.mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_restrictions() {
        let sep = SolverConfig::default()
            .with_mode(Mode::Separate)
            .resolve(3)
            .unwrap();
        assert!(sep.beta.iter().flatten().all(|&x| x == 0.0));
        assert!(sep.eta.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(sep.components().len(), 3);
        let nh = SolverConfig::default()
            .with_mode(Mode::NoHidden)
            .resolve(3)
            .unwrap();
        assert!(nh.gamma.iter().all(|&x| x == 0.0));
        assert_eq!(nh.beta[0][2], 10.0);
        assert_eq!(nh.components(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn pairwise_layout_ignores_lower_triangle() {
        let cfg = SolverConfig {
            beta: PerPair::Upper(vec![
                vec![9.0, 0.0, 2.0],
                vec![7.0, 9.0, 0.0],
                vec![7.0, 7.0, 9.0],
            ]),
            eta: PerPair::Uniform(0.0),
            ..Default::default()
        };
        let r = cfg.resolve(3).unwrap();
        assert_eq!(Resolved::active_pairs(&r.beta), vec![(0, 2, 2.0)]);
        assert_eq!(r.components(), vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn validation() {
        let mut cfg = SolverConfig::default();
        cfg.delta = 0.0;
        assert!(cfg.resolve(2).is_err());
        let cfg = SolverConfig {
            alpha: PerGraph::Values(vec![1.0]),
            ..Default::default()
        };
        assert!(cfg.resolve(2).is_err());
        let cfg = SolverConfig {
            gamma: PerGraph::Uniform(-1.0),
            ..Default::default()
        };
        assert!(cfg.resolve(2).is_err());
        assert!("pgl".parse::<Mode>().is_ok());
        assert_eq!("no-hidden".parse::<Mode>().unwrap(), Mode::NoHidden);
    }

    #[test]
    fn shorthand_deserializes() {
        let cfg: SolverConfig =
            serde_json::from_str(r#"{"alpha": [1, 2], "beta": 0.5, "mode": "NO_HIDDEN"}"#).unwrap();
        let r = cfg.resolve(2).unwrap();
        assert_eq!(r.alpha, vec![1.0, 2.0]);
        assert_eq!(r.beta[0][1], 0.5);
        assert_eq!(r.mode, Mode::NoHidden);
    }
}
