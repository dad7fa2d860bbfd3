//! End-to-end checks of the command-line tool: schemas round-trip,
//! identical inputs produce byte-identical output, and error exits are
//! distinguishable.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_theme-lab"))
}

fn write_tmp(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("theme-lab-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn info_reports_invariants_and_stability() {
    let e = write_tmp(
        "info.json",
        r#"{"lambda": ["5/2","5/2","5/2"], "S": [["1","2","1"],["1","2"]], "precision": 18}"#,
    );
    let out = run(&["theme", "info", e.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("rank: 3"));
    assert!(text.contains("stable: true"));
    assert!(text.contains("-1/2"));
}

#[test]
fn canon_output_feeds_back_in() {
    let e = write_tmp(
        "canon_in.json",
        r#"{"lambda": ["2","2"], "S": [["1","1","1"]], "precision": 14}"#,
    );
    let out = run(&["--format", "json", "theme", "canon", e.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["canonical"], serde_json::Value::Bool(true));
    assert_eq!(v["S"][0][1], "1");
    // round-trip: the emitted JSON is accepted back
    let back = write_tmp("canon_back.json", &stdout(&out));
    let out2 = run(&["theme", "info", back.to_str().unwrap()]);
    assert!(out2.status.success());
    assert!(stdout(&out2).contains("rank: 2"));
}

#[test]
fn scan_is_deterministic() {
    let inv = write_tmp("scan_inv.json", r#"{"lambda1": "5/2", "p": [1, 1]}"#);
    let grid = write_tmp(
        "scan_grid.json",
        r#"{"axes": [
            {"name": "S2.b^1", "values": ["1","2"]},
            {"name": "S1.b^1", "values": ["1","2"]},
            {"name": "S1.b^2", "values": ["0","1"]}
        ]}"#,
    );
    let args = [
        "--format",
        "json",
        "family",
        "scan",
        "--invariants",
        inv.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
    ];
    let out1 = run(&args);
    let out2 = run(&args);
    assert!(out1.status.success());
    assert_eq!(out1.stdout, out2.stdout, "byte-identical reruns");
    let v: serde_json::Value = serde_json::from_str(&stdout(&out1)).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 8);
    assert_eq!(v["strata"]["iso_classes"].as_array().unwrap().len(), 6);
    // stable points sit exactly on the diagonal
    for p in v["points"].as_array().unwrap() {
        let stable = p["stable"].as_bool().unwrap();
        assert_eq!(stable, p["sigma"]["S2.b^1"] == p["sigma"]["S1.b^1"]);
    }
}

#[test]
fn hom_and_ext_dims() {
    let a = write_tmp("hom_a.json", r#"{"lambda": ["7/2"], "S": [], "precision": 14}"#);
    let b = write_tmp("hom_b.json", r#"{"lambda": ["5/2"], "S": [], "precision": 14}"#);
    let out = run(&["--format", "json", "hom", "ext", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["dim_hom"], 1);
    assert_eq!(v["dim_ext1"], 2);
    assert_eq!(v["certified"], true);
}

#[test]
fn op_normalize_and_parse() {
    let out = run(&["op", "normalize", "a*b"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "b*a + b^2");
    let out2 = run(&["--format", "json", "op", "parse", "(a - 2*b)*inv(1 + 3*b)*(a - 2*b)"]);
    assert!(out2.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out2)).unwrap();
    assert_eq!(v["kind"], "chain");
    assert_eq!(v["bernstein_roots"][0], "-1");
}

#[test]
fn error_exits() {
    // input error: missing file
    let out = run(&["theme", "info", "/nonexistent/sicher.json"]);
    assert_eq!(out.status.code(), Some(3));
    // input error: operator syntax
    let out2 = run(&["op", "normalize", "a +"]);
    assert_eq!(out2.status.code(), Some(3));
    // input error: non-unit inverse in a chain
    let out3 = run(&["op", "parse", "(a - 2*b)*inv(2 + b)*(a - b)"]);
    assert_eq!(out3.status.code(), Some(3));
    // usage error: unknown subcommand
    let out4 = run(&["frobnicate"]);
    assert_eq!(out4.status.code(), Some(2));
    // invalid presentation data
    let bad = write_tmp("bad.json", r#"{"lambda": ["2","1/2"], "S": [["1"]]}"#);
    let out5 = run(&["theme", "info", bad.to_str().unwrap()]);
    assert_eq!(out5.status.code(), Some(3));
}

#[test]
fn env_precision_is_honored() {
    let e = write_tmp("envp.json", r#"{"lambda": ["5/2"], "S": []}"#);
    let out = bin()
        .env("THEMELAB_PRECISION", "9")
        .args(["--format", "json", "theme", "info", e.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["precision"], 9);
    // explicit flag overrides the environment
    let out2 = bin()
        .env("THEMELAB_PRECISION", "9")
        .args(["--precision", "12", "--format", "json", "theme", "info", e.to_str().unwrap()])
        .output()
        .unwrap();
    let v2: serde_json::Value = serde_json::from_str(&stdout(&out2)).unwrap();
    assert_eq!(v2["precision"], 12);
}

#[test]
fn dual_and_invariant2() {
    let e = write_tmp(
        "dual.json",
        r#"{"lambda": ["2","2"], "S": [["1","3"]], "precision": 16}"#,
    );
    let out = run(&["--format", "json", "theme", "dual", e.to_str().unwrap(), "--delta", "5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["invariants"]["lambda1"], "3");
    assert_eq!(v["cross_check_lambdas_match"], true);
    assert_eq!(v["rank2_invariant_formula"], "-3");
    assert_eq!(v["rank2_invariant_computed"], "3");
    let out2 = run(&["theme", "invariant2", e.to_str().unwrap()]);
    assert!(stdout(&out2).contains("3"));
}

#[test]
fn iso_and_inject() {
    let a = write_tmp(
        "iso_a.json",
        r#"{"lambda": ["5/2","5/2","5/2"], "S": [["1","2","1"],["1","1"]], "precision": 20}"#,
    );
    let b = write_tmp(
        "iso_b.json",
        r#"{"lambda": ["5/2","5/2","5/2"], "S": [["1","2","0"],["1","1"]], "precision": 20}"#,
    );
    let out = run(&["--format", "json", "theme", "iso", a.to_str().unwrap(), b.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["isomorphic"], true);
    let src = write_tmp(
        "inj_src.json",
        r#"{"lambda": ["3","3"], "S": [["1","2"]], "precision": 16}"#,
    );
    let tgt = write_tmp(
        "inj_tgt.json",
        r#"{"lambda": ["2","2"], "S": [["1","5"]], "precision": 16}"#,
    );
    let out2 = run(&["--format", "json", "hom", "inject", src.to_str().unwrap(), tgt.to_str().unwrap()]);
    let v2: serde_json::Value = serde_json::from_str(&stdout(&out2)).unwrap();
    assert_eq!(v2["exists"], true);
}
