use std::path::Path;
use std::process::{Command, Output};

fn jtopo(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jtopo"));
    cmd.args(args).env_remove("JTOPO_OUTPUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("JTOPO_OUTPUT_DIR", dir);
    }
    cmd.output().expect("jtopo runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture_dir() -> String {
    format!("{}/tests/fixtures", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn gen_requires_seed() {
    let o = jtopo(&["gen", "--n", "10"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn gen_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = jtopo(
        &["gen", "--n", "10", "--k", "2", "--h", "1", "--seed", "4"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["ensemble.json", "covariances.json", "problem.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let problem = dir.path().join("problem.json");
    let o = jtopo(
        &["solve", problem.to_str().unwrap(), "--outer-iters", "2"],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("objective:") && text.contains("normalized error:"));
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(record["history"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    jtopo(
        &["gen", "--n", "10", "--k", "2", "--h", "1", "--seed", "4"],
        Some(dir.path()),
    );
    let problem = dir.path().join("problem.json");
    let o = jtopo(
        &[
            "solve",
            problem.to_str().unwrap(),
            "--max-iters",
            "3",
            "--outer-iters",
            "1",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("converged: false"));
}

#[test]
fn solve_a_fixture_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let path = format!("{}/solver_o4_k2_h0_pgl.json", fixture_dir());
    let o = jtopo(&["solve", &path], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("reference objective"));
    assert!(text.contains("s_hat[1] = [["));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    jtopo(
        &["gen", "--n", "10", "--k", "2", "--h", "0", "--seed", "2"],
        Some(dir.path()),
    );
    let cfg = dir.path().join("solver.toml");
    std::fs::write(&cfg, "mode = \"SEPARATE\"\nouter_iters = 1\n").unwrap();
    let problem = dir.path().join("problem.json");
    let args = [
        "solve",
        problem.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ];
    let o = jtopo(&args, Some(dir.path()));
    assert!(stdout(&o).contains("mode: SEPARATE"));
    let mut with_flag = args.to_vec();
    with_flag.extend(["--mode", "NO_HIDDEN"]);
    let o = jtopo(&with_flag, Some(dir.path()));
    assert!(stdout(&o).contains("mode: NO_HIDDEN"));

    std::fs::write(&cfg, "mode = \"PGL\"\nsurprise = 1\n").unwrap();
    let o = jtopo(&args, Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_without_dataset_is_rejected() {
    let o = jtopo(&["experiment", "--tc", "3"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dataset"));
    let o = jtopo(&["experiment", "--tc", "4"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = format!("{}/data/surrogate.net", env!("CARGO_MANIFEST_DIR"));
    let o = jtopo(
        &[
            "experiment",
            "--tc",
            "3",
            "--dataset",
            &data,
            "--realizations",
            "1",
            "--sweep",
            "1000",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("testcase3.csv")).unwrap();
    assert!(csv.starts_with("model,K,sweep,mean,std,n,failed"));
    assert!(csv.contains("SEPARATE/graph3"));
    assert!(dir.path().join("testcase3.json").exists());
    assert!(dir.path().join("result_table.schema.json").exists());
}

#[test]
fn convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let src = format!("{}/data/surrogate.net", env!("CARGO_MANIFEST_DIR"));
    let json = dir.path().join("s.json");
    let net = dir.path().join("s.net");
    let again = dir.path().join("t.json");
    for (a, b) in [
        (src.as_str(), &json),
        (json.to_str().unwrap(), &net),
        (net.to_str().unwrap(), &again),
    ] {
        let o = jtopo(&["convert", a, b.to_str().unwrap()], None);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        std::fs::read(&json).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn convert_reports_parse_errors_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.net");
    std::fs::write(&bad, "*Vertices 3\n*Edges\n1 9\n").unwrap();
    let o = jtopo(
        &[
            "convert",
            bad.to_str().unwrap(),
            dir.path().join("x.json").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn fixtures_check_passes_and_flags_mismatch() {
    let o = jtopo(&["fixtures-check", &fixture_dir()], None);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));

    let dir = tempfile::tempdir().unwrap();
    let src =
        std::fs::read_to_string(format!("{}/solver_o4_k2_h0_pgl.json", fixture_dir())).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&src).unwrap();
    let obj = v["optimum"]["objective"].as_f64().unwrap();
    v["optimum"]["objective"] = serde_json::json!(obj * 1.5);
    std::fs::write(dir.path().join("broken.json"), v.to_string()).unwrap();
    let o = jtopo(&["fixtures-check", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
}
