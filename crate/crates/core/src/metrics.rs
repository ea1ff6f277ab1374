use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Rescales a ground-truth GSO to the estimator's scale convention (weighted
/// degree of the first node equal to one).
///
/// When the first node is isolated the convention is undefined; the matrix
/// is then scaled to unit mean weighted degree instead.
pub fn rescale_truth(t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let total = t.sum();
    if t.amax() == 0.0 || total == 0.0 {
        return Err(Error::UndefinedMetric("ground-truth matrix is zero".into()));
    }
    let first = t.column(0).sum();
    let scale = if first > 0.0 {
        first
    } else {
        total / t.nrows() as f64
    };
    Ok(t / scale)
}

/// `(1/K) sum_k ||T_k - E_k||_F^2 / ||T_k||_F^2` with each truth rescaled
/// by [`rescale_truth`].
pub fn normalized_error(truth: &[DMatrix<f64>], est: &[DMatrix<f64>]) -> Result<f64> {
    Ok(per_graph_errors(truth, est)?.iter().sum::<f64>() / truth.len() as f64)
}

/// Individual terms of [`normalized_error`].
pub fn per_graph_errors(truth: &[DMatrix<f64>], est: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    if truth.is_empty() || truth.len() != est.len() {
        return Err(Error::Dimension(format!(
            "{} truth matrices vs {} estimates",
            truth.len(),
            est.len()
        )));
    }
    truth
        .iter()
        .zip(est)
        .map(|(t, e)| {
            if t.shape() != e.shape() {
                return Err(Error::Dimension(format!(
                    "shapes {:?} vs {:?}",
                    t.shape(),
                    e.shape()
                )));
            }
            let t = rescale_truth(t)?;
            Ok((&t - e).norm_squared() / t.norm_squared())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.])
    }

    #[test]
    fn exact_and_zero_estimates() {
        let t = vec![path()];
        assert_eq!(normalized_error(&t, &t).unwrap(), 0.0);
        assert_eq!(normalized_error(&t, &[DMatrix::zeros(3, 3)]).unwrap(), 1.0);
        let two = vec![path(), path() * 2.0];
        let est = vec![path(), DMatrix::zeros(3, 3)];
        assert_eq!(normalized_error(&two, &est).unwrap(), 0.5);
    }

    #[test]
    fn scale_invariance() {
        let t = path();
        let e = DMatrix::from_row_slice(3, 3, &[0., 0.7, 0.3, 0.7, 0., 0.2, 0.3, 0.2, 0.]);
        let base = normalized_error(&[t.clone()], &[e.clone()]).unwrap();
        for c in [0.1, 3.0, 17.5] {
            let scaled = normalized_error(&[&t * c], &[e.clone()]).unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_first_node_falls_back() {
        let t = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 0., 2., 0., 2., 0.]);
        let r = rescale_truth(&t).unwrap();
        assert!((r.sum() / 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_truth_is_undefined() {
        assert!(matches!(
            normalized_error(&[DMatrix::zeros(2, 2)], &[DMatrix::zeros(2, 2)]),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
