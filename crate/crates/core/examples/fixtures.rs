// Checks the committed reference fixtures against this implementation.

use std::path::Path;

use joint_topology::fixtures::{check_fixture, load_fixture_dir};

fn main() -> joint_topology::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for (path, fx) in load_fixture_dir(&dir)? {
        let c = check_fixture(&fx)?;
        println!(
            "{:<36} {} deviation {:.2e}",
            path.file_name().unwrap().to_string_lossy(),
            if c.passed() { "ok  " } else { "FAIL" },
            c.deviation
        );
    }
    Ok(())
}
