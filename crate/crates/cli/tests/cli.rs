use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/online_shop")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn pltgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pltgen"))
        .args(args)
        .env("PLTGEN_COLOR", "never")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn models() -> Vec<String> {
    vec![
        "--fm".into(),
        fixture("feature_model.json"),
        "--sm".into(),
        fixture("state_machine.json"),
        "--map".into(),
        fixture("mapping.json"),
    ]
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

#[test]
fn validate_accepts_the_fixture() {
    let m = models();
    let o = pltgen(&with(&["validate"], &m));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 documents valid"));
}

#[test]
fn validate_names_an_unknown_mapping_feature() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.json");
    fs::write(
        &map,
        r#"{"entries": [{"presence": {"op": "var", "name": "Teleport"}, "elements": ["SearchResults"]}]}"#,
    )
    .unwrap();
    let o = pltgen(&[
        "validate",
        "--fm",
        &fixture("feature_model.json"),
        "--sm",
        &fixture("state_machine.json"),
        "--map",
        map.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let line = stderr(&o);
    let d: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(d["kind"], "unknown-feature");
    assert_eq!(d["feature"], "Teleport");
}

#[test]
fn validate_reports_an_unsatisfiable_model() {
    let dir = tempfile::tempdir().unwrap();
    let fm = dir.path().join("fm.json");
    fs::write(
        &fm,
        r#"{"name": "broken", "root": {"id": "R", "children": [{"id": "A", "kind": "mandatory"}]},
            "constraints": [{"op": "not", "args": [{"op": "var", "name": "A"}]}]}"#,
    )
    .unwrap();
    let o = pltgen(&["validate", "--fm", fm.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("unsatisfiable"));
    assert!(stderr(&o).contains(r#""kind":"unsatisfiable""#));
}

#[test]
fn variants_count_and_derivation() {
    let o = pltgen(&["variants", "--fm", &fixture("feature_model.json"), "--count"]);
    assert_eq!(stdout(&o), "20\n");
    let o = pltgen(&["variants", "--fm", &fixture("feature_model.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = pltgen(&["variants", "--fm", &fixture("feature_model.json"), "--enumerate", "--format", "json"]);
    let all: Vec<Vec<String>> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(all.len(), 20);
}

#[test]
fn variants_of_a_single_feature_model() {
    let dir = tempfile::tempdir().unwrap();
    let fm = dir.path().join("fm.json");
    fs::write(&fm, r#"{"name": "one", "root": {"id": "Only"}}"#).unwrap();
    let o = pltgen(&["variants", "--fm", fm.to_str().unwrap(), "--enumerate"]);
    assert_eq!(stdout(&o), "Only\n");
}

#[test]
fn check_reproduces_the_reference_numbers() {
    let o = pltgen(&["check", &fixture("reference/top_down.json"), "--sm", &fixture("state_machine.json"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["events"], 43);
    assert_eq!(v["coverage"]["ratio"], 1.0);
    assert_eq!(v["coverage"]["targets"].as_array().unwrap().len(), 22);

    let m = models();
    let o = pltgen(&with(&["check", &fixture("reference/bottom_up.json"), "--enriched", "--format", "json"], &m));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["events"], 27);
    assert_eq!(v["coverage"]["ratio"], 1.0);
}

#[test]
fn check_on_a_variant_model() {
    let m = models();
    let o = pltgen(&with(
        &[
            "check",
            &fixture("reference/variant_ii.json"),
            "--configuration",
            "OnlineShop,Catalog,Payment,Security,BankAccount,ECoins,Low,Search",
        ],
        &m,
    ));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("20/20"));
}

#[test]
fn check_reports_the_failing_step() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    fs::write(
        &suite,
        r#"{"model": "x", "cases": [{"id": "bad", "events": ["OpenProductCatalog", "Teleport"]}]}"#,
    )
    .unwrap();
    let o = pltgen(&["check", suite.to_str().unwrap(), "--sm", &fixture("state_machine.json")]);
    assert_eq!(o.status.code(), Some(1));
    let d: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(d["kind"], "NoEnabledTransition");
    assert_eq!(d["case"], "bad");
    assert_eq!(d["step"], 1);
}

fn generate(out: &Path, extra: &[&str]) -> Output {
    let m = models();
    let mut args = vec!["generate", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pltgen(&with(&args, &m))
}

fn suite_count(out: &Path) -> usize {
    fs::read_dir(out.join("suites")).unwrap().count()
}

#[test]
fn generate_top_down_writes_two_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate(dir.path(), &["--pipeline", "top-down"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(suite_count(dir.path()), 2);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for v in report["variants"].as_array().unwrap() {
        assert_eq!(v["ratio"], 1.0);
    }
    assert!(dir.path().join("plan.json").exists());
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn generate_bottom_up_covers_everything() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate(dir.path(), &["--pipeline", "bottom-up", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(suite_count(dir.path()) >= 1);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["plan"]["covered"], 22);
    assert_eq!(v["plan"]["targets"], 22);
}

#[test]
fn minimizing_never_adds_variants() {
    for strategy in ["greedy", "fewest-cases"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(a.path(), &["--pipeline", "bottom-up", "--strategy", strategy]);
        let o = generate(b.path(), &["--pipeline", "bottom-up", "--strategy", strategy, "--minimize-variants"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(suite_count(b.path()) <= suite_count(a.path()));
    }
}

#[test]
fn generate_is_byte_identical_across_runs_and_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path(), &["--pipeline", "top-down"]);
    generate(b.path(), &["--pipeline", "top-down", "--jobs", "4"]);
    for f in ["plan.json", "report.json", "report.txt", "suites/variant-1.json", "suites/variant-2.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn report_compares_plans() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path(), &["--pipeline", "top-down"]);
    generate(b.path(), &["--pipeline", "bottom-up"]);
    let pa = a.path().join("plan.json");
    let pb = b.path().join("plan.json");
    let o = pltgen(&["report", pa.to_str().unwrap(), pb.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("top-down")));
    assert!(out.lines().any(|l| l.starts_with("bottom-up")));
    let again = pltgen(&["report", pa.to_str().unwrap(), pb.to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn export_dot_renders_the_machine() {
    let o = pltgen(&["export-dot", "--sm", &fixture("state_machine.json")]);
    assert_eq!(o.status.code(), Some(0));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("subgraph"));
    let o = pltgen(&["export-dot", "--sm", &fixture("state_machine.json"), "--flat"]);
    assert!(!stdout(&o).contains("subgraph"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(pltgen(&[]).status.code(), Some(2));
    assert_eq!(pltgen(&["validate"]).status.code(), Some(2));
    assert_eq!(pltgen(&["generate", "--pipeline", "sideways"]).status.code(), Some(2));
    assert_eq!(pltgen(&["variants", "--fm", "x", "--count", "--enumerate"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_pltgen"))
        .args(["variants", "--fm", &fixture("feature_model.json"), "--count"])
        .env("PLTGEN_COLOR", "sometimes")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_one() {
    let o = pltgen(&["variants", "--fm", "/nonexistent/fm.json"]);
    assert_eq!(o.status.code(), Some(1));
    let d: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(d["kind"], "io");
}

#[test]
fn color_is_opt_in() {
    let m = models();
    let o = Command::new(env!("CARGO_BIN_EXE_pltgen"))
        .args(with(&["validate"], &m))
        .env("PLTGEN_COLOR", "always")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("\x1b[32mOK"));
    let o = pltgen(&with(&["validate"], &m));
    assert!(!stdout(&o).contains('\x1b'));
}
