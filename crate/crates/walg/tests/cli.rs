//! End-to-end tests of the `walg` binary: exit codes, output formats, and
//! determinism.

use std::process::{Command, Output};

fn walg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walg"))
        .args(args)
        .env_remove("WALG_REGISTRY")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn n_coeff_matches_reference_value() {
    let out = walg(&["n-coeff", "--q1", "2", "--q2", "2", "--m", "1", "--n", "-1", "--p", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "-4");
}

#[test]
fn n_coeff_accepts_half_integers_and_reps() {
    let out = walg(&[
        "n-coeff", "--q1", "3/2", "--q2", "5/2", "--m", "-1/2", "--n", "3/2", "--p", "2",
        "--rep", "lemma",
    ]);
    assert!(out.status.success());
    let lemma = stdout(&out);
    let out = walg(&[
        "n-coeff", "--q1", "3/2", "--q2", "5/2", "--m", "-1/2", "--n", "3/2", "--p", "2",
        "--rep", "def",
    ]);
    assert_eq!(lemma, stdout(&out));
}

#[test]
fn bracket_emits_two_term_json() {
    let out = walg(&[
        "bracket",
        "Wt[q=2,s=2,m=1]",
        "Wt[q=2,s=2,m=-1]",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let terms = v["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 2);
    assert!(v["dropped"].as_array().unwrap().is_empty());
    let coeffs: Vec<&str> = terms.iter().map(|t| t["coeff"].as_str().unwrap()).collect();
    assert!(coeffs.contains(&"2") && coeffs.contains(&"-2"));
}

#[test]
fn bracket_output_is_deterministic() {
    let args = ["bracket", "Wt[q=3,s=2,m=2]", "Wt[q=3,s=2,m=-1]", "--format", "json"];
    let first = walg(&args);
    let second = walg(&args);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn kappa_check_lists_violations_and_exits_one() {
    let dir = std::env::temp_dir().join("walg-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ones.json");
    let entries: Vec<String> = [
        (0, 1, 1),
        (-2, 2, 2),
        (1, 1, 2),
        (0, 2, 2),
        (-1, 1, 1),
        (-1, 1, 2),
        (1, 1, 1),
        (0, 0, 1),
    ]
    .iter()
    .map(|(a, b, c)| format!(r#"{{"s":["{a}","{b}","{c}"],"kappa":"1"}}"#))
    .collect();
    std::fs::write(&path, format!(r#"{{"entries":[{}]}}"#, entries.join(","))).unwrap();
    let out = walg(&["kappa-check", "--registry", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k(0,1,1)^2"), "stderr names the quadratic constraint: {err}");
}

#[test]
fn kappa_check_passes_on_unit_default_only_when_explicit_keys_exist() {
    // With no registry the default kappa = 1 has no explicit keys, which
    // is a domain error for constraint checking.
    let out = walg(&["kappa-check"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn registry_env_var_is_honored() {
    let dir = std::env::temp_dir().join("walg-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scaled.json");
    std::fs::write(&path, r#"{"default":"3","entries":[]}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_walg"))
        .args(["bracket", "Wt[q=2,s=2,m=1]", "Wt[q=2,s=2,m=-1]", "--format", "json"])
        .env("WALG_REGISTRY", &path)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let coeffs: Vec<&str> = v["terms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["coeff"].as_str().unwrap())
        .collect();
    assert!(coeffs.contains(&"6") && coeffs.contains(&"-6"));
}

#[test]
fn malformed_generator_spec_is_a_usage_error() {
    let out = walg(&["bracket", "Wt[q=2,s=2,m=zzz]", "Wt[q=2,s=2,m=0]"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column"), "error reports a position: {err}");
}

#[test]
fn missing_coupling_is_a_domain_error() {
    let dir = std::env::temp_dir().join("walg-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("empty.json");
    std::fs::write(&path, r#"{"entries":[]}"#).unwrap();
    let out = walg(&[
        "bracket",
        "Wt[q=2,s=2,m=1]",
        "Wt[q=2,s=2,m=-1]",
        "--registry",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kappa_{2,2,-2}") || err.contains("kappa_{2,2,-1}"), "{err}");
}

#[test]
fn mode_extract_agrees_with_bracket() {
    let extract = walg(&[
        "mode-extract", "--kind", "wtilde", "--q1", "2", "--q2", "2", "--m", "1", "--n", "-1",
        "--format", "json",
    ]);
    assert!(extract.status.success());
    let ev: serde_json::Value = serde_json::from_str(&stdout(&extract)).unwrap();
    let bracket = walg(&["bracket", "Wt[q=2,s=2,m=1]", "Wt[q=2,s=2,m=-1]", "--format", "json"]);
    let bv: serde_json::Value = serde_json::from_str(&stdout(&bracket)).unwrap();
    assert_eq!(ev["terms"], bv["terms"]);
}

#[test]
fn jacobi_truncated_is_empty() {
    let out = walg(&[
        "jacobi",
        "Wt[q=2,s=2,m=1]",
        "Wt[q=3,s=2,m=-2]",
        "Wt[q=2,s=2,m=0]",
        "--truncate-p",
        "1",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0");
}

#[test]
fn twist_vhat_closed_form() {
    let out = walg(&["twist", "vhat", "--q", "5/2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("(2) Wt[q=3]"), "{text}");
    assert!(text.contains("(-1) dbar^1 Wt2[q=2]"), "{text}");
}

#[test]
fn table_output_is_sorted_and_deterministic() {
    let args = ["table", "--what", "n-coeff", "--q-max", "2", "--p-max", "2", "--format", "json"];
    let first = walg(&args);
    assert!(first.status.success());
    let second = walg(&args);
    assert_eq!(first.stdout, second.stdout);
    let v: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert!(!v.as_array().unwrap().is_empty());
}

#[test]
fn latex_output_uses_source_notation() {
    let out = walg(&[
        "bracket", "Wt[q=2,s=2,m=1]", "Wt[q=2,s=2,m=-1]", "--format", "latex",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("\\widetilde{W}^{2,2}_{0}"));
}
