// Reads the bundled multi-relation Pajek network and writes it back.

use std::path::Path;

use joint_topology::pajek::{
    from_ensemble, load_dataset, parse_pajek, to_pajek_string, IngestOptions,
};

fn main() -> joint_topology::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/surrogate.net");
    let ens = load_dataset(&path, IngestOptions::default())?;
    for (i, g) in ens.graphs().iter().enumerate() {
        println!("layer {}: {} edges", i + 1, g.edge_count());
    }

    let text = to_pajek_string(&from_ensemble(&ens, Some("copy")));
    let doc = parse_pajek(&text)?;
    println!(
        "re-parsed {} vertices, {} relations",
        doc.n,
        doc.relations.len()
    );
    print!(
        "{}",
        text.lines()
            .take(4)
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}
