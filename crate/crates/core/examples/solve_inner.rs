// One convex solve with fixed l1 weights, for each estimator mode.

use joint_topology::graph::{generate_ensemble, observed_block, EnsembleParams};
use joint_topology::metrics::normalized_error;
use joint_topology::signals::{cov_poly, FilterCoeffs};
use joint_topology::solver::{solve_inner, Mode, SolverConfig};
use nalgebra::DMatrix;

fn main() -> joint_topology::Result<()> {
    let ens = generate_ensemble(
        &EnsembleParams {
            n: 12,
            k: 2,
            hidden: 1,
            ..Default::default()
        },
        1,
    )?;
    let cov: Vec<_> = ens
        .graphs()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            Ok(observed_block(
                &cov_poly(g, &FilterCoeffs::random(g, 3, 10 + i as u64)?),
                ens.partition(),
            ))
        })
        .collect::<joint_topology::Result<_>>()?;
    let o = cov[0].nrows();
    let weights = vec![DMatrix::from_element(o, o, 1.0); cov.len()];
    let truth = ens.observed_gsos();

    for mode in [Mode::Pgl, Mode::Pnn, Mode::NoHidden, Mode::Separate] {
        let res = solve_inner(&cov, &weights, &SolverConfig::default().with_mode(mode))?;
        let last = &res.history[0];
        println!(
            "{mode:<10} objective {:>12.4e}  error {:.4}  admm iters {:>4}  converged {}",
            res.objective,
            normalized_error(&truth, &res.s_hat)?,
            last.admm_iters,
            res.converged
        );
    }
    Ok(())
}
