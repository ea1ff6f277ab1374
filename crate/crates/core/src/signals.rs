//! Graph filters, stationary covariance models and signal sampling.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DenseMatrixJson, Gso};

/// Eigenvalues below this (relative to the spectral radius) count as negative.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Coefficients `h_0, ..., h_{L-1}` of a polynomial graph filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoeffs(Vec<f64>);

impl FilterCoeffs {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::Parameter(
                "filter needs at least one coefficient".into(),
            ));
        }
        if h.iter().all(|&c| c == 0.0) {
            return Err(Error::Parameter("filter coefficients are all zero".into()));
        }
        if h.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite filter coefficient".into()));
        }
        Ok(FilterCoeffs(h))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Random filter of order `len`: coefficients uniform on [-1, 1], `h_0`
    /// redrawn until `||H||_2 >= 0.1`, then all coefficients scaled so that
    /// `||H||_2 = 1` on `g`.
    pub fn random(g: &Gso, len: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::Parameter(
                "filter needs at least one coefficient".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut norm = 0.0;
        for _ in 0..1000 {
            norm = if h.iter().all(|&c| c == 0.0) {
                0.0
            } else {
                spectral_norm(&graph_filter(g, &FilterCoeffs(h.clone())))
            };
            if norm >= 0.1 {
                break;
            }
            h[0] = rng.random_range(-1.0..=1.0);
        }
        if norm < 0.1 {
            return Err(Error::Numerical(
                "could not draw a non-degenerate filter".into(),
            ));
        }
        FilterCoeffs::new(h.into_iter().map(|c| c / norm).collect())
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `sum_l h_l S^l`, evaluated with Horner's rule.
pub fn graph_filter(g: &Gso, coeffs: &FilterCoeffs) -> DMatrix<f64> {
    let n = g.n();
    let s = g.weights();
    let h = coeffs.as_slice();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut acc = &eye * h[h.len() - 1];
    for &c in h.iter().rev().skip(1) {
        acc = &acc * s + &eye * c;
    }
    symmetrize(&acc)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    AnalyticPoly,
    AnalyticMrf,
    Sample,
}

/// Covariance matrices for every graph of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub kind: CovarianceKind,
    /// Per-graph sample counts, present only for sample covariances.
    pub sample_counts: Option<Vec<usize>>,
    pub matrices: Vec<DMatrix<f64>>,
}

impl CovarianceSet {
    pub fn new(kind: CovarianceKind, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        for (k, c) in matrices.iter().enumerate() {
            check_psd(c).map_err(|e| Error::Model(format!("covariance {k}: {e}")))?;
        }
        Ok(CovarianceSet {
            kind,
            sample_counts: None,
            matrices,
        })
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    /// Restricts each matrix to the observed block.
    pub fn observed(&self, part: &crate::graph::NodePartition) -> CovarianceSet {
        CovarianceSet {
            kind: self.kind,
            sample_counts: self.sample_counts.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|c| crate::graph::observed_block(c, part))
                .collect(),
        }
    }
}

/// Symmetry and numerical positive semidefiniteness.
pub fn check_psd(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let scale = c.amax().max(1.0);
    if (c - c.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Model("covariance is not symmetric".into()));
    }
    if c.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(symmetrize(c));
    let lmin = eig.eigenvalues.min();
    let radius = eig.eigenvalues.amax().max(1.0);
    if lmin < -PSD_TOLERANCE * radius {
        return Err(Error::Model(format!(
            "covariance has negative eigenvalue {lmin:e}"
        )));
    }
    Ok(())
}

/// `C = H^2` with `H` the graph filter of `coeffs` on `g`.
pub fn cov_poly(g: &Gso, coeffs: &FilterCoeffs) -> DMatrix<f64> {
    let h = graph_filter(g, coeffs);
    symmetrize(&(&h * &h))
}

/// `C = (sigma I + phi S)^{-1}` with `sigma = max(0, -phi lambda_min(S)) + margin`.
pub fn cov_mrf(g: &Gso, phi: f64, margin: f64) -> Result<DMatrix<f64>> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Parameter(format!("phi must be positive, got {phi}")));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Parameter(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let n = g.n();
    let eig = SymmetricEigen::new(g.weights().clone());
    let lmin = eig.eigenvalues.min();
    let sigma = (-phi * lmin).max(0.0) + margin;
    // Invert in the eigenbasis of S; the precision's spectrum is sigma + phi * lambda.
    let mut inv_spec = eig.eigenvalues.clone();
    for v in inv_spec.iter_mut() {
        let lam = sigma + phi * *v;
        if lam <= 0.0 {
            return Err(Error::Numerical("sigma I + phi S is singular".into()));
        }
        *v = 1.0 / lam;
    }
    let c = &eig.eigenvectors * DMatrix::from_diagonal(&inv_spec) * eig.eigenvectors.transpose();
    debug_assert_eq!(c.nrows(), n);
    Ok(symmetrize(&c))
}

/// MRF covariance with `phi ~ U(0, 1]` and margin `0.1 phi (1 + |lambda_min(S)|)`.
pub fn random_mrf(g: &Gso, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = 1.0 - rng.random::<f64>();
    let lmin = SymmetricEigen::new(g.weights().clone()).eigenvalues.min();
    cov_mrf(g, phi, 0.1 * phi * (1.0 + lmin.abs()))
}

/// Symmetric square root of a PSD matrix (negative roundoff clipped to zero).
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_psd(cov)?;
    let eig = SymmetricEigen::new(symmetrize(cov));
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// `m` i.i.d. zero-mean Gaussian signals (columns) with covariance `cov`.
pub fn sample_signals(cov: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    let root = psd_sqrt(cov)?;
    let n = cov.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    Ok(root * white)
}

/// `(1/m) X X^T`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Err(Error::Parameter(
            "sample covariance needs at least one signal".into(),
        ));
    }
    Ok(symmetrize(&((x * x.transpose()) / x.ncols() as f64)))
}

/// Sample covariance of `m` Gaussian signals with covariance `cov`, drawn
/// without materializing the signal matrix.
///
/// For `m >= n` the white-noise Gram matrix is drawn from its Wishart law
/// through the Bartlett factorization, so the cost does not grow with `m`.
pub fn draw_sample_covariance(cov: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if m < n.max(1) {
        return sample_covariance(&sample_signals(cov, m, seed)?);
    }
    let root = psd_sqrt(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new((m - i) as f64)
            .map_err(|e| Error::Numerical(format!("chi-squared draw: {e}")))?;
        lower[(i, i)] = chi.sample(&mut rng).sqrt();
        for j in 0..i {
            lower[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let gram = &lower * lower.transpose();
    Ok(symmetrize(&(&root * gram * &root / m as f64)))
}

#[derive(Serialize, Deserialize)]
struct CovarianceSetJson {
    kind: CovarianceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_counts: Option<Vec<usize>>,
    matrices: Vec<DenseMatrixJson>,
}

impl Serialize for CovarianceSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CovarianceSetJson {
            kind: self.kind,
            sample_counts: self.sample_counts.clone(),
            matrices: self
                .matrices
                .iter()
                .map(DenseMatrixJson::from_matrix)
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = CovarianceSetJson::deserialize(d)?;
        let matrices = raw
            .matrices
            .iter()
            .map(DenseMatrixJson::to_matrix)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(CovarianceSet {
            kind: raw.kind,
            sample_counts: raw.sample_counts,
            matrices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;

    fn single_edge() -> Gso {
        Gso::new(DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap()
    }

    fn rel_commutator(c: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
        (c * s - s * c).norm() / (c.norm() * s.norm()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn filter_basics() {
        let g = generate_er(6, 0.5, 1).unwrap();
        let id = graph_filter(&g, &FilterCoeffs::new(vec![1.0]).unwrap());
        assert_eq!(id, DMatrix::identity(6, 6));
        let s = graph_filter(&g, &FilterCoeffs::new(vec![0.0, 1.0]).unwrap());
        assert_eq!(&s, g.weights());
        let e = graph_filter(&single_edge(), &FilterCoeffs::new(vec![1.0, 1.0]).unwrap());
        assert_eq!(e, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn filter_coeff_validation() {
        assert!(FilterCoeffs::new(vec![]).is_err());
        assert!(FilterCoeffs::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn poly_covariance() {
        let g = single_edge();
        let c = cov_poly(&g, &FilterCoeffs::new(vec![1.0, 1.0]).unwrap());
        assert_eq!(c, DMatrix::from_element(2, 2, 2.0));
        assert_eq!(
            cov_poly(&g, &FilterCoeffs::new(vec![1.0]).unwrap()),
            DMatrix::identity(2, 2)
        );
        for seed in 0..10 {
            let g = generate_er(20, 0.2, seed).unwrap();
            let h = FilterCoeffs::random(&g, 3, seed + 100).unwrap();
            let c = cov_poly(&g, &h);
            assert!(rel_commutator(&c, g.weights()) <= 1e-8);
            check_psd(&c).unwrap();
            let hn = spectral_norm(&graph_filter(&g, &h));
            assert!((hn - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mrf_covariance() {
        let c = cov_mrf(&Gso::empty(3), 1.0, 0.5).unwrap();
        assert!((c - DMatrix::identity(3, 3) * 2.0).amax() < 1e-14);
        let c = cov_mrf(&single_edge(), 1.0, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0;
        assert!((c - expected).amax() < 1e-14);
        for seed in 0..10 {
            let g = generate_er(20, 0.2, seed).unwrap();
            let margin = 0.3;
            let c = cov_mrf(&g, 0.7, margin).unwrap();
            assert!(rel_commutator(&c, g.weights()) <= 1e-8);
            let eig = SymmetricEigen::new(c).eigenvalues;
            assert!(eig.min() > 0.0);
            assert!(eig.max() <= 1.0 / margin + 1e-9);
            assert!(random_mrf(&g, seed).is_ok());
        }
        assert!(cov_mrf(&single_edge(), 0.0, 1.0).is_err());
        assert!(cov_mrf(&single_edge(), 1.0, 0.0).is_err());
    }

    #[test]
    fn sample_covariance_arithmetic() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let c = sample_covariance(&e1).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(c.sum(), 1.0);
        assert_eq!(
            sample_covariance(&DMatrix::zeros(3, 4)).unwrap(),
            DMatrix::zeros(3, 3)
        );
        let x = DMatrix::identity(2, 2);
        assert_eq!(
            sample_covariance(&x).unwrap(),
            DMatrix::identity(2, 2) * 0.5
        );
    }

    #[test]
    fn white_noise_sampling() {
        let m = 20_000;
        let x = sample_signals(&DMatrix::identity(4, 4), m, 11).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert!((c - DMatrix::identity(4, 4)).amax() <= 5.0 / (m as f64).sqrt());
        let zero = sample_signals(&DMatrix::zeros(3, 3), 10, 1).unwrap();
        assert_eq!(zero, DMatrix::zeros(3, 10));
        assert_eq!(
            sample_signals(&DMatrix::identity(3, 3), 5, 2).unwrap(),
            sample_signals(&DMatrix::identity(3, 3), 5, 2).unwrap()
        );
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(sample_signals(&bad, 3, 0), Err(Error::Model(_))));
        assert!(sample_signals(&DMatrix::identity(2, 2), 0, 0).is_err());
    }

    #[test]
    fn sample_covariance_converges() {
        let g = generate_er(20, 0.2, 3).unwrap();
        let c = cov_poly(&g, &FilterCoeffs::random(&g, 3, 4).unwrap());
        let errs: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&m| {
                let chat = sample_covariance(&sample_signals(&c, m, 9).unwrap()).unwrap();
                (chat - &c).norm() / c.norm()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] <= 0.05);
    }

    #[test]
    fn wishart_draw_matches_direct_statistics() {
        let g = generate_er(10, 0.3, 8).unwrap();
        let c = cov_poly(&g, &FilterCoeffs::random(&g, 3, 1).unwrap());
        let m = 500;
        let reps = 400;
        let mut mean_bartlett = DMatrix::zeros(10, 10);
        let mut mean_err = 0.0;
        for r in 0..reps {
            let chat = draw_sample_covariance(&c, m, r).unwrap();
            mean_err += (&chat - &c).norm_squared() / reps as f64;
            mean_bartlett += chat / reps as f64;
        }
        assert!((mean_bartlett - &c).norm() / c.norm() < 0.02);
        // E||C_hat - C||_F^2 = (||C||_F^2 + tr(C)^2) / m for Gaussian data.
        let expected = (c.norm_squared() + c.trace().powi(2)) / m as f64;
        assert!(
            (mean_err / expected - 1.0).abs() < 0.15,
            "{mean_err} vs {expected}"
        );
    }
}
