use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn model(case: u8) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join(format!("../../models/case{case}.json"))
        .to_string_lossy()
        .into_owned()
}

fn gwi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn classify_reports_case_and_exponents() {
    for (case, exps) in [(1, "1 1 1"), (2, "1 1 2"), (3, "1 2 2"), (4, "1 2 3")] {
        let o = gwi(&["classify", "--model", &model(case)]);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.starts_with("# gwi "), "{text}");
        assert!(text.contains(&format!("\ncase,{case}\n")));
        assert!(text.contains(&format!("\nexponents,{exps}\n")));
        assert!(text.contains("\ncriticality,critical\n"));
    }
}

#[test]
fn classify_json_detects_relabelled_case() {
    // Case 4 with types listed in reverse order.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"p":3,"offspring":[
            {"kind":"deterministic","params":{"value":[1,0,0]}},
            {"kind":"poisson","params":{"means":[1.0,1.0,0.0]}},
            {"kind":"poisson","params":{"means":[0.0,1.0,1.0]}}],
            "immigration":{"kind":"poisson","params":{"means":[0.0,0.0,1.0]}}}"#,
    )
    .unwrap();
    let o = gwi(&["classify", "--model", path.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["case"], 4);
    assert_eq!(v["permutation"], serde_json::json!([3, 2, 1]));
    assert_eq!(v["exponents"], serde_json::json!([1, 2, 3]));
    assert_eq!(v["provenance"]["tool"], "gwi");
}

#[test]
fn moments_table_layout() {
    let o = gwi(&["moments", "--model", &model(4), "--k-max", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "k,EX_1,EX_2,EX_3,VarX_11,VarX_12,VarX_13,VarX_21,VarX_22,VarX_23,VarX_31,VarX_32,VarX_33");
    assert_eq!(lines.len(), 2 + 4);
    // E X_1 = (1, 1, 1) since the immigration mean is (1, 1, 1).
    assert!(lines[3].starts_with("1,1,1,1,"));
}

#[test]
fn moments_out_dir_writes_exponent_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gwi(&["moments", "--model", &model(3), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("exponents.json")).unwrap()).unwrap();
    assert_eq!(v["exponents"]["eta"], serde_json::json!([1, 2, 2]));
    assert!(dir.path().join("moments.csv").exists());
}

#[test]
fn simulate_layouts() {
    let o = gwi(&["simulate", "--model", &model(2), "--generations", "5", "--replicas", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1), Some("replica,k,X_1,X_2,X_3"));
    assert_eq!(text.lines().count(), 2 + 3 * 6);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gwi(&["simulate", "--model", &model(2), "--generations", "5", "--replicas", "3", "--layout", "per-replica", "--out", out]);
    assert!(o.status.success());
    for r in 0..3 {
        let body = std::fs::read_to_string(dir.path().join(format!("trajectory_{r}.csv"))).unwrap();
        assert_eq!(body.lines().nth(1), Some("k,X_1,X_2,X_3"));
    }

    let o = gwi(&["simulate", "--model", &model(2), "--layout", "per-replica"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_changes_output() {
    let a = gwi(&["simulate", "--model", &model(4), "--generations", "30", "--seed", "1"]);
    let b = gwi(&["simulate", "--model", &model(4), "--generations", "30", "--seed", "2"]);
    assert_ne!(stdout(&a), stdout(&b));
}

#[test]
fn sde_long_csv() {
    let o = gwi(&["sde", "--case", "3", "--b", "1,0,0", "--v", "1,0,0", "--a21", "1", "--a31", "2", "--dt", "0.1", "--paths", "2", "--every", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "path,t,X1,X2,X3");
    // Grid points 0, 5 and 10 for each path.
    assert_eq!(lines.len(), 2 + 2 * 3);
    assert_eq!(lines[2], "0,0,0,0,0");
}

#[test]
fn sde_rejects_case_mismatch() {
    let o = gwi(&["sde", "--case", "4", "--b", "1,0,0", "--v", "1,0,0", "--a21", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn identities_pass() {
    let o = gwi(&["identities", "--trials", "100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for f in ["formula_1,100,0", "formula_2,100,0", "formula_3,100,0"] {
        assert!(text.contains(f), "{text}");
    }
}

#[test]
fn converge_writes_report_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = gwi(&[
        "converge", "--model", &model(1), "--case", "1", "--n-list", "10,20", "--t-points", "1", "--replicas", "1000",
        "--sde-paths", "100", "--dt", "0.01", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 2 * 3);
    assert!(std::fs::read_to_string(dir.path().join("report.csv")).unwrap().starts_with("# gwi "));
}

#[test]
fn converge_rejects_wrong_case_and_few_replicas() {
    let o = gwi(&["converge", "--model", &model(1), "--case", "2", "--replicas", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gwi(&["converge", "--model", &model(1), "--case", "1", "--replicas", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_are_single_line_exit_2() {
    for args in [
        vec!["simulate", "--nope"],
        vec!["classify", "--model", "/nonexistent/model.json"],
        vec!["frobnicate"],
    ] {
        let o = gwi(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: validation: "));
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: PathBuf = dir.path().join("run.json");
    std::fs::copy(model(1), dir.path().join("m.json")).unwrap();
    // The model path is relative to the config file.
    std::fs::write(&cfg, r#"{"model": "m.json", "generations": 2, "seed": 5}"#).unwrap();
    let o = gwi(&["simulate", "--model", "ignored.json", "--generations", "50", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("# gwi ") && text.contains(" seed=5 "));
    assert_eq!(text.lines().count(), 2 + 3);

    std::fs::write(&cfg, r#"{"generatons": 2}"#).unwrap();
    let o = gwi(&["simulate", "--model", &model(1), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unwritable_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let o = gwi(&["classify", "--model", &model(1), "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
