// The proximal maps and projections used inside the ADMM loop.

use joint_topology::prox::{
    feasibility_violation, group_soft_threshold, nuclear_norm, project_feasible, project_simplex,
    soft_threshold, stacked_group_soft_threshold, svd_soft_threshold,
};
use nalgebra::DMatrix;

fn main() -> joint_topology::Result<()> {
    let m = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.1, 2.0, 0.05, -0.4, 0.7, 0.9, -1.5]);
    println!("input {m}");
    println!("entrywise, tau 0.5 {}", soft_threshold(&m, 0.5));
    println!("columns, tau 1.0 {}", group_soft_threshold(&m, 1.0));

    let (a, b) = stacked_group_soft_threshold(&m, &m.transpose(), 1.0)?;
    println!("stacked columns, tau 1.0: {a}{b}");

    let low = svd_soft_threshold(&m, 1.0)?;
    println!(
        "nuclear norm {:.3} -> {:.3}",
        nuclear_norm(&m),
        nuclear_norm(&low)
    );

    println!(
        "simplex projection of [0.5, 1.5, -0.2]: {:?}",
        project_simplex(&[0.5, 1.5, -0.2])
    );
    let s = project_feasible(&m)?;
    println!("feasible projection {s}");
    println!("violation {:.1e}", feasibility_violation(&s));
    Ok(())
}
