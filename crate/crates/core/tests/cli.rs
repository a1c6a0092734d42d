use std::path::Path;
use std::process::Command;

use genbound::bounds::{variable_size_bound, BoundReport};
use genbound::cli::{parse_config, run, CommandKind, Overrides, RunConfig, RunStatus};
use genbound::Error;
use serde_json::{json, Map, Value};

fn flags(command: CommandKind, params: Value) -> Overrides {
    let Value::Object(params) = params else { panic!() };
    Overrides {
        command: Some(command),
        params,
        ..Overrides::default()
    }
}

fn config_path(e: Error) -> String {
    match e {
        Error::Config { path, .. } => path,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genbound"))
}

#[test]
fn empty_file_plus_flags_is_valid() {
    let mut f = flags(
        CommandKind::Bound,
        json!({"kind": "fixed_size", "rate": 1.0, "sigma": 0.5, "n": 10, "delta": 0.1}),
    );
    f.seed = Some(9);
    let cfg = parse_config(Some(""), &f).unwrap();
    assert_eq!(cfg.command, CommandKind::Bound);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.params.len(), 5);
}

#[test]
fn duplicate_keys_are_named() {
    let text = r#"{"command": "rd", "params": {"source": [1.0], "source": [1.0]}}"#;
    let err = parse_config(Some(text), &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("duplicate key `source`"), "{err}");
}

#[test]
fn unknown_and_mistyped_keys_are_rejected_with_paths() {
    let err = parse_config(Some(r#"{"command": "rd", "sed": 1}"#), &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("sed"), "{err}");
    let f = flags(CommandKind::Covering, json!({"trails": 100}));
    assert!(parse_config(None, &f).unwrap_err().to_string().contains("trails"));
    let f = flags(CommandKind::Covering, json!({"trials": "many"}));
    assert_eq!(config_path(parse_config(None, &f).unwrap_err()), "params.trials");
    let f = flags(CommandKind::Bound, json!({"kind": "variable_size", "rate": 1.0}));
    assert_eq!(config_path(parse_config(None, &f).unwrap_err()), "params.sigma");
    let f = flags(
        CommandKind::Bound,
        json!({"kind": "fixed_size", "rate": 1.0, "sigma": 1.0, "n": 5, "delta": 0.1, "beta": 2.0}),
    );
    assert_eq!(config_path(parse_config(None, &f).unwrap_err()), "params.beta");
}

#[test]
fn flags_override_file_values() {
    let text = r#"{"command": "counterexample", "seed": 1, "params": {"trials": 10, "delta": 0.2}}"#;
    let mut f = flags(CommandKind::Counterexample, json!({"trials": 20}));
    f.seed = Some(2);
    let cfg = parse_config(Some(text), &f).unwrap();
    assert_eq!(cfg.seed, 2);
    assert_eq!(cfg.params["trials"], json!(20));
    assert_eq!(cfg.params["delta"], json!(0.2));
    let mismatch = flags(CommandKind::Rd, json!({}));
    assert_eq!(config_path(parse_config(Some(text), &mismatch).unwrap_err()), "command");
}

#[test]
fn canonical_config_round_trips() {
    let text = r#"{"command": "sweep", "seed": 77, "threads": 2, "out": "x",
        "params": {"n_list": [10, 100], "rate": 0.3, "sigma": 0.1, "delta": 0.05, "epsilon": 1e-3}}"#;
    let cfg = parse_config(Some(text), &Overrides::default()).unwrap();
    let canon = cfg.to_canonical().unwrap();
    let again: RunConfig = parse_config(Some(&canon), &Overrides::default()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(canon, again.to_canonical().unwrap());
}

fn config_in(dir: &Path, command: CommandKind, params: Value, seed: u64) -> RunConfig {
    let mut f = flags(command, params);
    f.seed = Some(seed);
    f.out = Some(dir.to_path_buf());
    parse_config(None, &f).unwrap()
}

#[test]
fn bound_dispatch_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        CommandKind::Bound,
        json!({"kind": "variable_size", "rate": 1.25, "sigma": 0.5, "n": 40, "delta": 0.05, "epsilon": 0.01}),
        0,
    );
    let manifest = run(&cfg).unwrap();
    assert_eq!(manifest.status, RunStatus::Pass);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: BoundReport = serde_json::from_str(&text).unwrap();
    let direct = variable_size_bound(1.25, 0.5, 40, 0.05, 0.01).unwrap();
    assert_eq!(report, direct);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn same_seed_same_hashes() {
    let params = json!({"m_grid": [4, 8], "trials": 400});
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ma = run(&config_in(a.path(), CommandKind::Covering, params.clone(), 5)).unwrap();
    let mb = run(&config_in(b.path(), CommandKind::Covering, params.clone(), 5)).unwrap();
    let mc = run(&config_in(c.path(), CommandKind::Covering, params, 6)).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_ne!(ma.outputs, mc.outputs);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let params = json!({"m_grid": [4, 8], "trials": 500});
    let mut ca = config_in(a.path(), CommandKind::Covering, params.clone(), 3);
    let mut cb = config_in(b.path(), CommandKind::Covering, params, 3);
    ca.threads = Some(1);
    cb.threads = Some(3);
    assert_eq!(run(&ca).unwrap().outputs, run(&cb).unwrap().outputs);
}

#[test]
fn counterexample_smoke_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["counterexample", "--n-list", "4", "--trials", "200", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("n,mc_mean_gen,bound_expectation"));
    assert!(lines[1].starts_with("4,"));
}

#[test]
fn rd_csv_has_one_row_per_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        CommandKind::Rd,
        json!({"source": [0.5, 0.5], "eps_grid": [0.05, 0.1, 0.25, 0.4]}),
        0,
    );
    run(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("rd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let rate: f64 = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let h = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
    assert!((rate - (2f64.ln() - h)).abs() < 1e-5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fail = bin()
        .args(["covering", "--rate", "0", "--trials", "200", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(fail.code(), Some(2));
    let err = bin()
        .args(["bound", "--kind", "variable_size", "--rate", "1", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(err.code(), Some(1));
    let bad = bin().args(["bound", "--kind", "no_such_bound"]).status().unwrap();
    assert_eq!(bad.code(), Some(1));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut params = Map::new();
    params.insert("n_list".into(), json!([10, 40, 160]));
    params.insert("rate".into(), json!(0.5));
    params.insert("sigma".into(), json!(0.5));
    params.insert("delta".into(), json!(0.1));
    let cfg = json!({"command": "sweep", "out": out, "params": params});
    let path = dir.path().join("run.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let status = bin().arg("--config").arg(&path).arg("sweep").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("bound_sweep.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(values.windows(2).all(|w| w[1] < w[0]));
}
