// A reduced hidden-node sweep, written as CSV to stdout.

use joint_topology::experiments::{run_testcase1, table_to_csv, ExperimentSpec};

fn main() -> joint_topology::Result<()> {
    let mut spec = ExperimentSpec::for_testcase(1)?.quick();
    spec.realizations = 2;
    spec.sweep = vec![0, 2];
    spec.k = vec![3];
    let table = run_testcase1(&spec)?;
    print!("{}", table_to_csv(&table)?);
    Ok(())
}
