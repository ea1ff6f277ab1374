//! Graph-shift operators, synthetic ensembles of related graphs and the
//! observed/hidden block structure.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, hollow, nonnegative adjacency matrix used as graph-shift operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gso {
    weights: DMatrix<f64>,
}

impl Gso {
    /// Wraps a weight matrix after checking symmetry, zero diagonal and nonnegativity.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n != weights.ncols() {
            return Err(Error::Dimension(format!(
                "GSO must be square, got {}x{}",
                n,
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Input(format!("nonzero diagonal entry at node {i}")));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Input(format!("invalid weight {w} at ({i}, {j})")));
                }
                if w != weights[(j, i)] {
                    return Err(Error::Input(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(Gso { weights })
    }

    pub fn empty(n: usize) -> Self {
        Gso {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn into_weights(self) -> DMatrix<f64> {
        self.weights
    }

    /// Number of undirected edges (pairs with nonzero weight).
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.weights[(i, j)] != 0.0)
            .count()
    }

    /// Number of unordered pairs whose edge indicator differs.
    pub fn pair_distance(&self, other: &Gso) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (self.weights[(i, j)] != 0.0) != (other.weights[(i, j)] != 0.0))
            .count()
    }
}

/// Erdős–Rényi graph with unit weights.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<Gso> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "node count must be >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "edge probability {p} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                w[(i, j)] = 1.0;
                w[(j, i)] = 1.0;
            }
        }
    }
    Ok(Gso { weights: w })
}

/// Flips each pair's edge indicator independently with probability `rho`.
/// Surviving edges keep their weight; created edges get weight 1.
pub fn perturb_related(base: &Gso, rho: f64, seed: u64) -> Result<Gso> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!(
            "flip probability {rho} not in [0, 1]"
        )));
    }
    let n = base.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = base.weights.clone();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < rho {
                let flipped = if w[(i, j)] != 0.0 { 0.0 } else { 1.0 };
                w[(i, j)] = flipped;
                w[(j, i)] = flipped;
            }
        }
    }
    Ok(Gso { weights: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenPolicy {
    Random,
    Last,
}

impl std::str::FromStr for HiddenPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(HiddenPolicy::Random),
            "last" => Ok(HiddenPolicy::Last),
            other => Err(Error::Parameter(format!("unknown hidden policy '{other}'"))),
        }
    }
}

/// Split of the node set into observed and hidden indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePartition {
    observed: Vec<usize>,
    hidden: Vec<usize>,
}

impl NodePartition {
    pub fn new(n: usize, hidden: &[usize]) -> Result<Self> {
        let mut is_hidden = vec![false; n];
        for &h in hidden {
            if h >= n {
                return Err(Error::Partition(format!(
                    "hidden index {h} out of range for {n} nodes"
                )));
            }
            if is_hidden[h] {
                return Err(Error::Partition(format!("hidden index {h} listed twice")));
            }
            is_hidden[h] = true;
        }
        if !hidden.is_empty() && hidden.len() >= n - hidden.len() {
            return Err(Error::TooManyHidden {
                nodes: n,
                hidden: hidden.len(),
            });
        }
        let observed = (0..n).filter(|&i| !is_hidden[i]).collect();
        let hidden = (0..n).filter(|&i| is_hidden[i]).collect();
        Ok(NodePartition { observed, hidden })
    }

    pub fn all_observed(n: usize) -> Self {
        NodePartition {
            observed: (0..n).collect(),
            hidden: Vec::new(),
        }
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn n(&self) -> usize {
        self.observed.len() + self.hidden.len()
    }

    /// Permutation placing observed nodes first.
    fn order(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().chain(self.hidden.iter()).copied()
    }
}

pub fn select_hidden(n: usize, h: usize, seed: u64, policy: HiddenPolicy) -> Result<NodePartition> {
    if h > 0 && h >= n - h.min(n) {
        return Err(Error::TooManyHidden {
            nodes: n,
            hidden: h,
        });
    }
    let hidden: Vec<usize> = match policy {
        HiddenPolicy::Last => (n - h..n).collect(),
        HiddenPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, n, h).into_vec()
        }
    };
    NodePartition::new(n, &hidden)
}

/// Observed/hidden blocks of a GSO.
#[derive(Debug, Clone, PartialEq)]
pub struct GsoBlocks {
    pub s_oo: DMatrix<f64>,
    pub s_oh: DMatrix<f64>,
    pub s_hh: DMatrix<f64>,
}

/// Submatrix indexed by `rows` x `cols`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Observed-by-observed block of any N x N matrix (GSO or covariance).
pub fn observed_block(m: &DMatrix<f64>, part: &NodePartition) -> DMatrix<f64> {
    submatrix(m, &part.observed, &part.observed)
}

pub fn partition_blocks(g: &Gso, part: &NodePartition) -> Result<GsoBlocks> {
    if part.n() != g.n() {
        return Err(Error::Partition(format!(
            "partition covers {} nodes, graph has {}",
            part.n(),
            g.n()
        )));
    }
    let w = &g.weights;
    Ok(GsoBlocks {
        s_oo: submatrix(w, &part.observed, &part.observed),
        s_oh: submatrix(w, &part.observed, &part.hidden),
        s_hh: submatrix(w, &part.hidden, &part.hidden),
    })
}

pub fn reassemble(blocks: &GsoBlocks, part: &NodePartition) -> Result<Gso> {
    let o = part.observed.len();
    let h = part.hidden.len();
    if blocks.s_oo.shape() != (o, o)
        || blocks.s_oh.shape() != (o, h)
        || blocks.s_hh.shape() != (h, h)
    {
        return Err(Error::Dimension(
            "block shapes do not match partition".into(),
        ));
    }
    let order: Vec<usize> = part.order().collect();
    let n = o + h;
    let mut w = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let v = match (a < o, b < o) {
                (true, true) => blocks.s_oo[(a, b)],
                (true, false) => blocks.s_oh[(a, b - o)],
                (false, true) => blocks.s_oh[(b, a - o)],
                (false, false) => blocks.s_hh[(a - o, b - o)],
            };
            w[(order[a], order[b])] = v;
        }
    }
    Gso::new(w)
}

/// K graphs on a common node set with one shared partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEnsemble {
    graphs: Vec<Gso>,
    partition: NodePartition,
}

impl GraphEnsemble {
    pub fn new(graphs: Vec<Gso>, partition: NodePartition) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::Input("ensemble needs at least one graph".into()));
        };
        let n = first.n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::Dimension(
                "graphs in an ensemble must share the node count".into(),
            ));
        }
        if partition.n() != n {
            return Err(Error::Partition(format!(
                "partition covers {} nodes, graphs have {n}",
                partition.n()
            )));
        }
        Ok(GraphEnsemble { graphs, partition })
    }

    pub fn graphs(&self) -> &[Gso] {
        &self.graphs
    }

    pub fn partition(&self) -> &NodePartition {
        &self.partition
    }

    pub fn k(&self) -> usize {
        self.graphs.len()
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn with_partition(&self, partition: NodePartition) -> Result<Self> {
        GraphEnsemble::new(self.graphs.clone(), partition)
    }

    /// Observed blocks S_O of every graph.
    pub fn observed_gsos(&self) -> Vec<DMatrix<f64>> {
        self.graphs
            .iter()
            .map(|g| observed_block(&g.weights, &self.partition))
            .collect()
    }
}

/// Parameters of a synthetic ensemble: a base ER graph plus `k - 1`
/// perturbed copies, sharing one hidden set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub p: f64,
    pub k: usize,
    pub rho: f64,
    pub hidden: usize,
    pub policy: HiddenPolicy,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            n: 20,
            p: 0.2,
            k: 3,
            rho: 0.1,
            hidden: 1,
            policy: HiddenPolicy::Random,
        }
    }
}

pub fn generate_ensemble(params: &EnsembleParams, seed: u64) -> Result<GraphEnsemble> {
    if params.k == 0 {
        return Err(Error::Parameter("ensemble size K must be >= 1".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let base = generate_er(params.n, params.p, seeds.random())?;
    let mut graphs = Vec::with_capacity(params.k);
    graphs.push(base.clone());
    for _ in 1..params.k {
        graphs.push(perturb_related(&base, params.rho, seeds.random())?);
    }
    let part = select_hidden(params.n, params.hidden, seeds.random(), params.policy)?;
    GraphEnsemble::new(graphs, part)
}

/// JSON container for dense square matrices: `{n, weights: row-major list}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrixJson {
    pub n: usize,
    pub weights: Vec<f64>,
}

impl DenseMatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..m.ncols() {
                weights.push(m[(i, j)]);
            }
        }
        DenseMatrixJson { n, weights }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.weights.len() != self.n * self.n {
            return Err(Error::Dimension(format!(
                "expected {} entries for n = {}, got {}",
                self.n * self.n,
                self.n,
                self.weights.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.n, self.n, &self.weights))
    }
}

impl Serialize for Gso {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseMatrixJson::from_matrix(&self.weights).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gso {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DenseMatrixJson::deserialize(d)?;
        let m = raw.to_matrix().map_err(serde::de::Error::custom)?;
        Gso::new(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleJson {
    graphs: Vec<Gso>,
    partition: NodePartition,
}

impl Serialize for GraphEnsemble {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EnsembleJson {
            graphs: self.graphs.clone(),
            partition: self.partition.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GraphEnsemble {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = EnsembleJson::deserialize(d)?;
        let part = NodePartition::new(raw.partition.n(), &raw.partition.hidden)
            .map_err(serde::de::Error::custom)?;
        GraphEnsemble::new(raw.graphs, part).map_err(serde::de::Error::custom)
    }
}
