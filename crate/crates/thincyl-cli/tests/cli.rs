use std::path::Path;
use std::process::{Command, Output};

fn thincyl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thincyl"))
        .args(args)
        .output()
        .expect("run thincyl")
}

fn config(dir: &Path, name: &str, doc: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, doc).unwrap();
    p.to_string_lossy().into_owned()
}

/// The failure diagnostic: exactly one line with the expected fields.
fn diagnostic(out: &Output, kind: &str, code: i32) -> String {
    assert_eq!(out.status.code(), Some(code));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("thincyl: error kind="), "{err}");
    assert!(err.contains(&format!("kind={kind} exit={code} ")), "{err}");
    err
}

const CHEAP: &str = r#"{"scenario": "linear-advection", "epsilons": [0.2, 0.1, 0.05],
    "grid": {"nx": 40, "nt": 40}, "reference": {"nx": 200, "nr": 8, "snapshots": 20}}"#;

#[test]
fn validate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "la.json", r#"{"scenario": "linear-advection"}"#);
    let out = dir.path().join("out");
    let o = thincyl(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("validate.json")).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
}

#[test]
fn assemble_without_limit_names_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "la.json", r#"{"scenario": "linear-advection"}"#);
    let out = dir.path().join("out");
    let o = thincyl(&["assemble", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let err = diagnostic(&o, "dependency", 4);
    assert!(err.contains("command=assemble") && err.contains("limit artifact"), "{err}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = thincyl(&["limit", "--config", "x.json", "--frobnicate"]);
    diagnostic(&o, "usage", 2);
    let o = thincyl(&["limit", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    diagnostic(&o, "config", 2);
    let bad = config(dir.path(), "bad.json", r#"{"scenario": "linear-advection", "colour": 3}"#);
    let err = diagnostic(&thincyl(&["limit", "--config", &bad]), "parse", 2);
    assert!(err.contains("colour"), "{err}");
    let la = config(dir.path(), "la.json", r#"{"scenario": "linear-advection"}"#);
    let out = dir.path().join("out");
    let o = thincyl(&["study", "--config", &la, "--out", out.to_str().unwrap(), "--epsilons", "0.2,0.1"]);
    diagnostic(&o, "config", 2);
    let o = thincyl(&["layers", "--pipeline", "--config", &la, "--out", out.to_str().unwrap(), "--beta", "2"]);
    diagnostic(&o, "config", 2);
}

#[test]
fn cfl_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "coarse.json",
        r#"{"scenario": "linear-advection", "epsilons": [0.1],
            "reference": {"nx": 200, "nr": 8, "nt": 10, "snapshots": 10}}"#,
    );
    let out = dir.path().join("out");
    let o = thincyl(&["reference", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let err = diagnostic(&o, "numeric", 3);
    assert!(err.contains("max admissible dt"), "{err}");
}

#[test]
fn pipeline_matches_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "sf.json",
        r#"{"scenario": "saturating-flux", "grid": {"nx": 40, "nt": 40, "nxi": 12, "modes": 8}}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for stage in ["validate", "limit", "cell", "layers", "assemble"] {
        let o = thincyl(&[stage, "--config", &cfg, "--out", a.to_str().unwrap()]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = thincyl(&["assemble", "--pipeline", "--config", &cfg, "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "cache")
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn study_names_follow_scenario_and_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "cheap.json", CHEAP);
    let out = dir.path().join("out");
    let o = thincyl(&["study", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(names.len(), 1);
    let stamp = names[0].strip_prefix("linear-advection-").unwrap().strip_suffix(".csv").unwrap();
    assert_eq!(stamp.len(), "20260101T000000Z".len(), "{stamp}");
    let o = thincyl(&["study", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("linear-advection.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epsilon,sup_first,sup_leading,energy_first,avg_leading\n"));
}

#[test]
fn overrides_change_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "cheap.json", CHEAP);
    let out = dir.path().join("out");
    let o = thincyl(&[
        "assemble",
        "--pipeline",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--order",
        "leading",
        "--epsilons",
        "0.3,0.15",
        "--grid",
        "32,32",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("assemble-leading.json")).unwrap()).unwrap();
    let eps: Vec<f64> = doc["boundary_fit"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["epsilon"].as_f64().unwrap())
        .collect();
    assert_eq!(eps, vec![0.3, 0.15]);
    let lim: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("limit.json")).unwrap()).unwrap();
    assert_eq!(lim["nx"], 32);
}
