//! Proximal operators and projections used by the splitting solver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Bisection tolerance on the multiplier of the unit-degree constraint.
const BISECTION_TOL: f64 = 1e-12;

/// Euclidean projection onto the unit simplex `{x >= 0, sum x = 1}`.
///
/// The multiplier `tau` solving `sum max(x_i - tau, 0) = 1` is bracketed by
/// bisection, then recomputed in closed form from the resulting active set.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty(), "simplex projection of an empty vector");
    let excess = |tau: f64| x.iter().map(|&v| (v - tau).max(0.0)).sum::<f64>() - 1.0;
    let hi_start = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = hi_start - 1.0;
    let mut hi = hi_start;
    while hi - lo > BISECTION_TOL * (1.0 + hi.abs().max(lo.abs())) {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bracket = 0.5 * (lo + hi);
    let (count, sum) = x
        .iter()
        .filter(|&&v| v > bracket)
        .fold((0usize, 0.0), |(c, s), &v| (c + 1, s + v));
    let tau = if count == 0 {
        bracket
    } else {
        (sum - 1.0) / count as f64
    };
    x.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Projection onto the feasible adjacency set: symmetric, hollow,
/// nonnegative, with the first column summing to one.
pub fn project_feasible(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let o = m.nrows();
    if o != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {:?}",
            m.shape()
        )));
    }
    if o < 2 {
        return Err(Error::Dimension(format!(
            "unit first-column sum needs at least 2 nodes, got {o}"
        )));
    }
    let mut out = DMatrix::zeros(o, o);
    for j in 1..o {
        for i in j + 1..o {
            let v = (0.5 * (m[(i, j)] + m[(j, i)])).max(0.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    let first: Vec<f64> = (1..o).map(|i| 0.5 * (m[(i, 0)] + m[(0, i)])).collect();
    for (i, v) in (1..o).zip(project_simplex(&first)) {
        out[(i, 0)] = v;
        out[(0, i)] = v;
    }
    Ok(out)
}

/// Largest violation of the feasible-set constraints.
pub fn feasibility_violation(s: &DMatrix<f64>) -> f64 {
    let o = s.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..o {
        worst = worst.max(s[(i, i)].abs());
        for j in 0..o {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs()).max(-s[(i, j)]);
        }
    }
    if o > 0 {
        worst = worst.max((s.column(0).sum() - 1.0).abs());
    }
    worst
}

/// Elementwise `sign(x) max(|x| - tau, 0)`.
pub fn soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    m.map(|x| x.signum() * (x.abs() - tau).max(0.0))
}

/// Column shrinkage factor `max(1 - tau / norm, 0)`; columns at the kink map to zero.
fn shrink_factor(norm: f64, tau: f64) -> f64 {
    if norm <= tau || norm == 0.0 {
        0.0
    } else {
        1.0 - tau / norm
    }
}

/// Prox of `tau ||.||_{2,1}` (sum of column norms).
pub fn group_soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    if tau == 0.0 {
        return m.clone();
    }
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let f = shrink_factor(col.norm(), tau);
        col *= f;
    }
    out
}

/// Prox of `tau ||[A; B]||_{2,1}`: column `j` of both matrices is shrunk by
/// the norm of the stacked column.
pub fn stacked_group_soft_threshold(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    tau: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "stacked matrices need equal column counts, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if tau == 0.0 {
        return Ok((a.clone(), b.clone()));
    }
    let mut oa = a.clone();
    let mut ob = b.clone();
    for j in 0..a.ncols() {
        let norm = (a.column(j).norm_squared() + b.column(j).norm_squared()).sqrt();
        let f = shrink_factor(norm, tau);
        oa.column_mut(j).scale_mut(f);
        ob.column_mut(j).scale_mut(f);
    }
    Ok((oa, ob))
}

/// Prox of `tau ||.||_*`: singular values shrunk by `tau`.
pub fn svd_soft_threshold(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if tau == 0.0 || m.is_empty() {
        return Ok(m.clone());
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let shrunk = svd.singular_values.map(|s| (s - tau).max(0.0));
    Ok(u * DMatrix::from_diagonal(&shrunk) * vt)
}

/// `||C S + P - S C - P^T||_F`.
pub fn commutativity_residual(c_o: &DMatrix<f64>, s_o: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    commutator_with_lift(c_o, s_o, p).norm()
}

pub(crate) fn commutator_with_lift(
    c_o: &DMatrix<f64>,
    s_o: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    c_o * s_o - s_o * c_o + p - p.transpose()
}

pub fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn l21_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

pub fn stacked_l21_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| (x.norm_squared() + y.norm_squared()).sqrt())
        .sum()
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    /// Golden-section minimizer for a unimodal scalar function.
    fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-12 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn scalar_soft_threshold() {
        let m = DMatrix::from_row_slice(1, 2, &[3.0, -0.5]);
        assert_eq!(
            soft_threshold(&m, 1.0),
            DMatrix::from_row_slice(1, 2, &[2.0, 0.0])
        );
        assert_eq!(soft_threshold(&m, 0.0), m);
        for &x in &[-2.3, -0.4, 0.0, 0.7, 5.1] {
            let tau = 0.9;
            let z = golden(|z| 0.5 * (z - x) * (z - x) + tau * z.abs(), -10.0, 10.0);
            let got = soft_threshold(&DMatrix::from_element(1, 1, x), tau)[(0, 0)];
            assert!((got - z).abs() < 1e-6);
        }
    }

    #[test]
    fn group_threshold_fixtures() {
        let m = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let out = group_soft_threshold(&m, 2.5);
        assert!((out - DMatrix::from_column_slice(2, 1, &[1.5, 2.0])).amax() < 1e-15);
        assert_eq!(group_soft_threshold(&m, 5.0), DMatrix::zeros(2, 1));
        assert_eq!(group_soft_threshold(&m, 7.0), DMatrix::zeros(2, 1));
        assert_eq!(group_soft_threshold(&m, 0.0), m);
        // Radial reduction: the prox lies on the ray through c, minimize over the scale.
        let c = DVector::from_vec(vec![3.0, 4.0]);
        let t = golden(
            |t| 0.5 * (&c * t - &c).norm_squared() + 2.5 * (t * 5.0),
            0.0,
            1.0,
        );
        assert!((t - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stacked_threshold_fixtures() {
        let a = DMatrix::from_column_slice(2, 1, &[3.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 4.0]);
        let (oa, ob) = stacked_group_soft_threshold(&a, &b, 2.5).unwrap();
        assert!((oa - DMatrix::from_column_slice(2, 1, &[1.5, 0.0])).amax() < 1e-15);
        assert!((ob - DMatrix::from_column_slice(2, 1, &[0.0, 2.0])).amax() < 1e-15);
        let (za, zb) = stacked_group_soft_threshold(&a, &b, 0.0).unwrap();
        assert_eq!((za, zb), (a.clone(), b.clone()));
        let z = DMatrix::zeros(2, 2);
        assert_eq!(
            stacked_group_soft_threshold(&z, &z, 1.0).unwrap(),
            (z.clone(), z.clone())
        );
        assert!(stacked_group_soft_threshold(&a, &DMatrix::zeros(2, 2), 1.0).is_err());
    }

    #[test]
    fn svd_threshold() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let out = svd_soft_threshold(&m, 2.0).unwrap();
        assert!((out - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).amax() < 1e-12);
        let r = DMatrix::from_fn(5, 5, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 1.7 + 0.1 * i as f64
        });
        assert!((svd_soft_threshold(&r, 0.0).unwrap() - &r).amax() < 1e-10);
        let smax = r.clone().singular_values().max();
        assert!(svd_soft_threshold(&r, smax).unwrap().amax() < 1e-10);
        assert!(svd_soft_threshold(&r, 0.99 * smax).unwrap().amax() > 1e-6);
    }

    #[test]
    fn projection_fixtures() {
        let out = project_feasible(&DMatrix::zeros(5, 5)).unwrap();
        for i in 1..5 {
            assert!((out[(i, 0)] - 0.25).abs() < 1e-15);
            assert!((out[(0, i)] - 0.25).abs() < 1e-15);
        }
        assert_eq!(out.view((1, 1), (4, 4)).amax(), 0.0);
        let two = project_feasible(&DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0])).unwrap();
        assert_eq!(two, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!(feasibility_violation(&two) == 0.0);
        let again = project_feasible(&out).unwrap();
        assert!((again - &out).amax() < 1e-15);
        assert!(matches!(
            project_feasible(&DMatrix::zeros(1, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn simplex_projection_against_sort_rule() {
        // Sort-based reference for the simplex projection.
        fn reference(x: &[f64]) -> Vec<f64> {
            let mut u = x.to_vec();
            u.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut css = 0.0;
            let mut theta = 0.0;
            for (i, &v) in u.iter().enumerate() {
                css += v;
                let t = (css - 1.0) / (i + 1) as f64;
                if v - t > 0.0 {
                    theta = t;
                }
            }
            x.iter().map(|&v| (v - theta).max(0.0)).collect()
        }
        let cases: [&[f64]; 4] = [
            &[0.2, -1.0, 3.0],
            &[0.0; 6],
            &[1e6, 1e6 + 1.0],
            &[-5.0, -4.0],
        ];
        for x in cases {
            let got = project_simplex(x);
            for (g, r) in got.iter().zip(reference(x)) {
                assert!((g - r).abs() < 1e-12, "{x:?}");
            }
        }
    }

    #[test]
    fn residual_cases() {
        let s = DMatrix::from_fn(4, 4, |i, j| if i != j { (i + j) as f64 } else { 0.0 });
        let p0 = DMatrix::zeros(4, 4);
        assert_eq!(
            commutativity_residual(&DMatrix::identity(4, 4), &s, &p0),
            0.0
        );
        let psym = DMatrix::from_fn(4, 4, |i, j| (i * j) as f64);
        let c = &s * &s;
        assert!(commutativity_residual(&c, &s, &psym) < 1e-10);
    }

    #[test]
    fn norms() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, -1.0]);
        assert_eq!(l1_norm(&m), 8.0);
        assert_eq!(l21_norm(&m), 6.0);
        assert_eq!(stacked_l21_norm(&m, &m), 2f64.sqrt() * 6.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        assert!((nuclear_norm(&d) - 5.0).abs() < 1e-12);
    }
}
