use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dislab::ball::BallConstructionTrace;
use dislab::experiments::ExperimentOutput;
use dislab::flat::FlatValue;
use dislab::io::from_json;
use dislab::relax::PhiSolution;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dislab"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn psi_of_zero_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "psi.json", r#"{"xi": [0, 0]}"#);
    let o = run(&["psi", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], 0.0);
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("experiment"));
}

#[test]
fn schema_violation_points_at_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"xi": [1, "one"]}"#);
    let o = run(&["psi", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("xi[1]"), "{}", stderr(&o));

    let cfg = write(dir.path(), "typo.json", r#"{"experiment": {"type": "energy_sweep"}, "ladr": [0.01]}"#);
    let o = run(&["experiment", "run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ladr"), "{}", stderr(&o));
}

#[test]
fn precondition_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "psi.json", r#"{"xi": [1, 0], "delta": 1.5}"#);
    let o = run(&["psi", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn missing_config_exits_one() {
    let o = run(&["phi"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["flat", "--config", "/nonexistent/flat.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn phi_and_flat_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let cfg = write(dir.path(), "phi.json", r#"{"xi": [1, 1], "psi": [[1, 0], [0, 1]]}"#);
    let o = run(&["phi", "--config", &cfg, "--out", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let phi: PhiSolution = from_json(&fs::read_to_string(out.join("phi.json")).unwrap()).unwrap();
    // psi = |xi|^2 on the square lattice: the cheapest split of (1, 1) is e1 + e2
    assert!((phi.value - 2.0).abs() < 1e-12);

    let cfg = write(
        dir.path(),
        "flat.json",
        r#"{"mu": [{"x": [0.3, 0.5], "xi": [1, 0]}], "h": 0.02}"#,
    );
    let o = run(&["flat", "--config", &cfg, "--out", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let flat: FlatValue = from_json(&fs::read_to_string(out.join("flat.json")).unwrap()).unwrap();
    assert!((flat.value - 0.3).abs() <= 2.0 * 0.02);
}

#[test]
fn ball_writes_trace_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "ball.json",
        r#"{"mu": [{"x": [0.3, 0.5], "xi": [1, 0]}, {"x": [0.35, 0.5], "xi": [-1, 0]}],
            "eps": 0.001, "stop": {"time": 40}}"#,
    );
    let o = run(&["ball", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace: BallConstructionTrace = from_json(&fs::read_to_string(out.join("ball.json")).unwrap()).unwrap();
    assert_eq!(trace.final_family().len(), 1);
    let svg = fs::read_to_string(out.join("ball.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn surgery_reports_conservation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "surgery.json",
        r#"{"mu": [{"x": [0, 0], "xi": [1, 0]}],
            "params": {"alpha": 0.4, "gamma": 0.2, "k_bound": 100, "eps": 0.001},
            "region": {"kind": "polygon", "domain": {"vertices": [[-1, -1], [1, -1], [1, 1], [-1, 1]]}},
            "dichotomy": {"alpha": 0.25, "gamma": 0.2, "delta": 0.05, "k_bound": 100, "l": 0.5, "c": 1.1, "eps": 0.001}}"#,
    );
    let o = run(&["surgery", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["diagnostics"]["conservation"]["max_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["dichotomy"]["holds_proof"], true);
}

fn parse_csv(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn critical_config_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("configs/critical.json");
    let o = run(&["experiment", "run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let got = fs::read_to_string(dir.path().join("critical.csv")).unwrap();
    let want = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/critical.csv")).unwrap();
    let (gh, gr) = parse_csv(&got);
    let (wh, wr) = parse_csv(&want);
    assert_eq!(gh, wh);
    assert_eq!(gr.len(), 4, "one row per ladder point");
    assert_eq!(gr.len(), wr.len());
    for (g, w) in gr.iter().zip(&wr) {
        for (a, b) in g.iter().zip(w) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }
    let json = fs::read_to_string(dir.path().join("critical.json")).unwrap();
    let parsed: ExperimentOutput = from_json(&json).unwrap();
    assert_eq!(parsed.csv().unwrap(), got);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = repo_root().join("configs/critical.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run(&["experiment", "run", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    let ob = run(&["--jobs", "1", "experiment", "run", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(oa.status.success() && ob.status.success());
    for f in ["critical.csv", "critical.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_the_configuration() {
    let cfg = repo_root().join("configs/critical.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["experiment", "run", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap()]);
    let o = run(&["experiment", "run", cfg.to_str().unwrap(), "--seed", "8", "--out", b.path().to_str().unwrap()]);
    assert!(o.status.success());
    let ca = fs::read_to_string(a.path().join("critical.csv")).unwrap();
    let cb = fs::read_to_string(b.path().join("critical.csv")).unwrap();
    assert_ne!(ca, cb);
}

#[test]
fn report_reemits_the_csv() {
    let cfg = repo_root().join("configs/critical.json");
    let dir = tempfile::tempdir().unwrap();
    run(&["experiment", "run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let json = dir.path().join("critical.json");
    let o = run(&["report", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("energy sweep: 4 rows"));
    let csv = fs::read_to_string(dir.path().join("critical.csv")).unwrap();
    assert!(text.ends_with(&csv));
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(repo_root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg: dislab::experiments::ExperimentConfig = from_json(&text).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn schemas_are_valid_json() {
    for entry in fs::read_dir(repo_root().join("docs/schemas")).unwrap() {
        let path = entry.unwrap().path();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(v.get("$schema").is_some(), "{}", path.display());
    }
}
