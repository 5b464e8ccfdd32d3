use std::process::Command;

fn mlgibbs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlgibbs"))
}

fn synth(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let x = dir.join("x.mtx");
    let y = dir.join("y.csv");
    let status = mlgibbs()
        .args(["synth", "--rows", "60", "--cols", "80", "--groups", "10", "--fill", "0.1", "--seed", "3"])
        .arg("--out")
        .arg(&x)
        .arg("--targets-out")
        .arg(&y)
        .status()
        .unwrap();
    assert!(status.success());
    (x, y)
}

#[test]
fn run_writes_report_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = synth(dir.path());
    let run = |report: &str| {
        let out = mlgibbs()
            .args(["run", "--sampler", "ml", "--levels", "2", "--coarse-range", "5,30"])
            .args(["--samples", "120", "--burnin", "20", "--folds", "3", "--seed", "9"])
            .args(["--schedule", "vcycle:10"])
            .arg("--data")
            .arg(&x)
            .arg("--report")
            .arg(dir.path().join(report))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("ML-G"));
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(report)).unwrap()).unwrap();
        v
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a["folds"].as_array().unwrap().len(), 3);
    assert_eq!(a["rmse"], b["rmse"]);
    assert_eq!(a["pearson"], b["pearson"]);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path());
    let cfg = dir.path().join("cfg.json");
    let json = serde_json::json!({
        "data": x, "targets": y, "sampler": "gibbs", "samples": 60, "burnin": 10, "folds": 2
    });
    std::fs::write(&cfg, json.to_string()).unwrap();
    let out = mlgibbs()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--folds", "3", "--precision", "f32"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.starts_with("Gibbs"));
    assert_eq!(table.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 3);
}

#[test]
fn hierarchy_summary_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = synth(dir.path());
    let out = mlgibbs()
        .args(["hierarchy", "--coarse-range", "5,30", "--data"])
        .arg(&x)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(*v["widths"].as_array().unwrap().last().unwrap(), 80);
}

#[test]
fn level_variance_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = synth(dir.path());
    let out = mlgibbs()
        .args(["level-variance", "--coarse-range", "5,30", "--samples", "30", "--burnin", "5"])
        .args(["--probes", "2", "--coupling", "solves", "--data"])
        .arg(&x)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("coupling,level,probe"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("solves,")));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.mtx");
    let out = mlgibbs().arg("run").arg("--data").arg(&missing).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = mlgibbs().args(["run", "--schedule", "zigzag:3"]).output().unwrap();
    assert!(!out.status.success());
    let bad = dir.path().join("bad.mtx");
    std::fs::write(&bad, "2 2 1\n3 1 1\n").unwrap();
    let out = mlgibbs().arg("hierarchy").arg("--data").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
