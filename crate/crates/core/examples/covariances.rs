// Stationary covariances for a graph: polynomial filters, a Gaussian MRF,
// and finite-sample estimates of both.

use joint_topology::graph::generate_er;
use joint_topology::signals::{cov_poly, draw_sample_covariance, random_mrf, FilterCoeffs};
use nalgebra::DMatrix;

fn commutator(c: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    (c * s - s * c).norm() / (c * s).norm()
}

fn main() -> joint_topology::Result<()> {
    let g = generate_er(20, 0.2, 3)?;
    let coeffs = FilterCoeffs::random(&g, 3, 4)?;
    let poly = cov_poly(&g, &coeffs);
    let mrf = random_mrf(&g, 5)?;
    println!("filter taps: {:?}", coeffs.as_slice());
    println!("poly commutator: {:.2e}", commutator(&poly, g.weights()));
    println!("mrf commutator:  {:.2e}", commutator(&mrf, g.weights()));

    for m in [100, 10_000, 1_000_000] {
        let est = draw_sample_covariance(&poly, m, 6)?;
        println!(
            "M = {m:>7}: relative error {:.4}, commutator {:.2e}",
            (&est - &poly).norm() / poly.norm(),
            commutator(&est, g.weights())
        );
    }
    Ok(())
}
