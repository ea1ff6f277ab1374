use std::path::Path;

use joint_topology::fixtures::{check_fixture, load_fixture_dir, Fixture};

fn fixtures() -> Vec<Fixture> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    load_fixture_dir(&dir)
        .unwrap()
        .into_iter()
        .map(|(_, f)| f)
        .collect()
}

#[test]
fn every_fixture_matches_its_reference() {
    let all = fixtures();
    assert!(all.len() >= 20);
    let mut failures = Vec::new();
    for fx in &all {
        let check = check_fixture(fx).unwrap();
        println!(
            "{:<32} deviation {:.2e} (tol {:.0e}) {:.2}s",
            check.name, check.deviation, check.tolerance, check.seconds
        );
        if !check.passed() {
            failures.push(check.name);
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn solver_fixtures_cover_required_shapes() {
    let mut shapes = Vec::new();
    for fx in fixtures() {
        if let Fixture::Solver(f) = fx {
            let o = f.problem.covariances[0].n;
            let k = f.problem.covariances.len();
            let h = f.problem.partition.as_ref().map_or(0, |p| p.hidden().len());
            shapes.push((o, k, h));
        }
    }
    assert!(shapes.len() >= 6);
    for o in [4, 5] {
        assert!(shapes.iter().any(|s| s.0 == o));
    }
    for k in [2, 3] {
        assert!(shapes.iter().any(|s| s.1 == k));
    }
    for h in [0, 1] {
        assert!(shapes.iter().any(|s| s.2 == h));
    }
}
