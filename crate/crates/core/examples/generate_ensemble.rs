// Draws a base Erdos-Renyi graph, perturbs it into related layers and
// marks hidden nodes.

use joint_topology::graph::{generate_ensemble, EnsembleParams, HiddenPolicy};

fn main() -> joint_topology::Result<()> {
    let params = EnsembleParams {
        n: 20,
        p: 0.2,
        k: 3,
        rho: 0.1,
        hidden: 2,
        policy: HiddenPolicy::Random,
    };
    let ens = generate_ensemble(&params, 7)?;
    println!("{} graphs on {} nodes", ens.k(), ens.n());
    println!("hidden nodes: {:?}", ens.partition().hidden());
    for (i, g) in ens.graphs().iter().enumerate() {
        let base = &ens.graphs()[0];
        println!(
            "graph {i}: {} edges, {} pairs differ from graph 0",
            g.edge_count(),
            g.pair_distance(base)
        );
    }
    // the estimator only ever sees the observed blocks
    let s_o = &ens.observed_gsos()[0];
    println!("observed block is {}x{}", s_o.nrows(), s_o.ncols());
    Ok(())
}
