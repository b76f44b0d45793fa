use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mec-offload"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# manifest=manifest.json\n"));
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[k].clone()).collect()
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve"], &config("reference.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eq = csv_rows(&dir.path().join("equilibrium.csv"));
    for r in column(&eq, "ne_residual") {
        assert!(r.parse::<f64>().unwrap() <= 1e-4);
    }
    let trace = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(trace[0][..3], ["iteration", "device", "response_time"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["sweep_mode"], "gauss-seidel");
    assert_eq!(manifest["game"]["eps"], 1e-4);
}

#[test]
fn sweep_flag_reaches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--sweep", "jacobi", "--max-iters", "3"], &config("reference.toml"), dir.path());
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sweep_mode"], "jacobi");
    assert_eq!(manifest["game"]["max_iters"], 3);
}

#[test]
fn missing_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("reference.toml")).unwrap().replace("bandwidth = 10.0", "bandwidth = -1.0");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["solve"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.bandwidth"));
}

#[test]
fn infeasible_initial_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("start.toml");
    let text = std::fs::read_to_string(config("reference.toml")).unwrap() + "initial = [[4.0, 4.0], [0.0, 0.0]]\n";
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["solve"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_rows_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["sweep", "--target", "server_speed_all", "--coefficients", "2.0,0.5,1.0"],
        &config("reference.toml"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(column(&rows, "c"), ["2.00000000e0", "5.00000000e-1", "1.00000000e0"]);
    let bad = run(&["sweep", "--target", "speed"], &config("reference.toml"), dir.path());
    assert!(!bad.status.success());
}

#[test]
fn sweep_identity_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference.toml");
    assert!(run(&["solve"], &cfg, dir.path()).status.success());
    assert!(run(&["sweep", "--target", "rate_R22", "--coefficients", "1.0"], &cfg, dir.path()).status.success());
    let eq = csv_rows(&dir.path().join("equilibrium.csv"));
    let sweep = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(column(&eq, "response_time"), [column(&sweep, "T_1")[0].clone(), column(&sweep, "T_2")[0].clone()]);
}

#[test]
fn validate_zero_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["validate", "--zero-profile", "--horizon", "20000", "--replications", "4"],
        &config("reference.toml"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("validation.csv"));
    let quantity = column(&rows, "quantity");
    let status = column(&rows, "status");
    for (q, s) in quantity.iter().zip(&status) {
        if q == "response_time" {
            assert_eq!(s, "pass");
        }
    }
}

#[test]
fn validate_synthetic_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["validate", "--instances", "3", "--horizon", "100000", "--replications", "10"],
        &config("synthetic.toml"),
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("validation.csv"));
    assert_eq!(rows.len(), 1 + 4 * 4);
    let status = column(&rows, "status");
    assert!(status.iter().filter(|s| *s == "pass").count() >= 12, "{status:?}");
}

#[test]
fn audit_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["audit"], &config("reference.toml"), dir.path());
    assert!(out.status.success());
    let rows = csv_rows(&dir.path().join("audit.csv"));
    for d in column(&rows, "disagreement") {
        assert!(d.parse::<f64>().unwrap() <= 1e-2);
    }
}

#[test]
fn audit_rejects_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["audit", "--resolution", "2.0"], &config("reference.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("synthetic.toml");
    for d in [&a, &b] {
        assert!(run(&["solve"], &cfg, d.path()).status.success());
    }
    for f in ["trace.csv", "equilibrium.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}
