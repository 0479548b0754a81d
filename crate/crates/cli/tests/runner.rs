use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use mbadmm::io::write_problem;
use mbadmm::trace::{read_trace, CSV_HEADER};
use mbadmm::{assemble_problem, BlockSpec, DMatrix, DVector, LocalSet, ObjectiveHandle};
use mbadmm_cli::{parse_scenario_str, relative_gap, run_scenario, RunOptions, RunRecord, RunSummary};
use proptest::prelude::*;

fn zero_pair(path: &Path) {
    let block = |a: f64| BlockSpec::new(ObjectiveHandle::Zero, DMatrix::from_element(1, 1, a), LocalSet::Unbounded);
    let p = assemble_problem(vec![block(1.0), block(-1.0)], DVector::zeros(1)).unwrap();
    write_problem(&p, path).unwrap();
}

fn run(text: &str, out: &Path) -> RunSummary {
    let s = parse_scenario_str(text).unwrap();
    run_scenario(&s, &RunOptions { out_dir: Some(out.to_path_buf()), workers: None }).unwrap()
}

#[test]
fn trivially_feasible_two_block_run() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("pair.json");
    zero_pair(&inst);
    let text = format!(r#"{{"instance": {{"file": {:?}}}, "schemes": ["two_block"]}}"#, inst.to_str().unwrap());
    let out = dir.path().join("out");
    let summary = run(&text, &out);
    let r = &summary.runs[0];
    assert_eq!((r.status.as_str(), r.iterations), ("converged", Some(0)));
    assert_eq!(summary.oracle_objective, Some(0.0));
    assert_eq!(r.relative_gap, Some(0.0));
    let csv = fs::read_to_string(out.join("two_block.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("0,"));
    let on_disk: RunSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);
    assert!(!out.join("truth.json").exists());
}

const STRESS: &str = r#"{
    "instance": {"generator": "gauss_seidel_stress"},
    "schemes": ["gauss_seidel", {"scheme": "gbs", "alpha": 0.5, "max_iter": 50000}],
    "x0": 1.0
}"#;

#[test]
fn stress_instance_separates_gauss_seidel_from_gbs() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(STRESS, dir.path());
    assert_eq!(summary.runs[0].status, "diverged");
    assert_eq!(summary.runs[1].status, "converged");
    assert_eq!(summary.exit_code(&BTreeSet::new()), 1);
    let allowed = BTreeSet::from(["gauss_seidel".to_string()]);
    assert_eq!(summary.exit_code(&allowed), 0);
    let trace = read_trace(&dir.path().join("gauss_seidel.csv")).unwrap();
    assert_eq!(trace.len(), summary.runs[0].iterations.unwrap() + 1);
}

#[test]
fn reruns_write_identical_files() {
    let text = r#"{
        "instance": {"generator": "energy_management", "seed": 3, "params": {"generators": 2, "loads": 2, "nets": 2, "horizon": 3}},
        "schemes": ["variable_splitting", "prox_jacobi", {"scheme": "gauss_seidel", "max_iter": 500}, {"scheme": "jacobi", "max_iter": 200}],
        "trace_format": "json",
        "record_wall_time": false
    }"#;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(text, a.path());
    let s = parse_scenario_str(text).unwrap();
    run_scenario(&s, &RunOptions { out_dir: Some(b.path().to_path_buf()), workers: Some(4) }).unwrap();
    for name in ["variable_splitting.json", "prox_jacobi.json", "gauss_seidel.json", "jacobi.json", "summary.json", "problem.json", "truth.json"] {
        let x = fs::read(a.path().join(name)).unwrap_or_else(|e| panic!("{name}: {e}: {}", fs::read_to_string(a.path().join("summary.json")).unwrap()));
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn solver_errors_do_not_stop_later_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"instance": {"generator": "random_qp", "params": {"blocks": 3, "rows": 5}}, "schemes": ["two_block", "gbs"]}"#;
    let summary = run(text, dir.path());
    assert_eq!(summary.runs[0].status, "error");
    assert!(summary.runs[0].message.as_ref().unwrap().contains("two_block"));
    assert_eq!(summary.runs[1].status, "converged");
    assert!(summary.runs[1].relative_gap.unwrap() < 1e-4);
    let allowed = BTreeSet::from(["two_block".to_string()]);
    assert_eq!(summary.exit_code(&allowed), 1);
}

fn record(objective: Option<f64>, gap: Option<f64>) -> RunRecord {
    RunRecord {
        label: "x".into(),
        scheme: "gbs".into(),
        status: "converged".into(),
        iterations: Some(1),
        final_objective: objective,
        final_residual: Some(0.0),
        final_iterate_change: Some(0.0),
        wall_ms: 0.0,
        relative_gap: gap,
        trace_file: None,
        message: None,
    }
}

proptest! {
    #[test]
    fn relative_gap_matches_definition(obj in -1e6..1e6f64, oracle in -1e6..1e6f64) {
        let g = relative_gap(obj, oracle);
        let denom = if oracle.abs() > 1.0 { oracle.abs() } else { 1.0 };
        prop_assert_eq!(g, (obj - oracle).abs() / denom);
        prop_assert!(g >= 0.0);
        prop_assert_eq!(relative_gap(oracle, oracle), 0.0);
    }

    #[test]
    fn summaries_round_trip(objs in prop::collection::vec(-1e3..1e3f64, 1..5), oracle in -1e3..1e3f64) {
        let runs: Vec<RunRecord> = objs.iter().map(|&o| record(Some(o), Some(relative_gap(o, oracle)))).collect();
        let s = RunSummary {
            format_version: 1,
            instance: "random_qp (seed 1)".into(),
            blocks: 3,
            rows: 4,
            oracle_objective: Some(oracle),
            oracle_error: None,
            runs,
        };
        let back: RunSummary = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        for r in &back.runs {
            prop_assert_eq!(r.relative_gap.unwrap(), relative_gap(r.final_objective.unwrap(), oracle));
        }
        prop_assert_eq!(back, s);
    }
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mbadmm")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

#[test]
fn exit_codes_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("stress.json");
    fs::write(&scenario, STRESS).unwrap();
    let out = dir.path().join("out");
    let (s, o) = (scenario.to_str().unwrap(), out.to_str().unwrap());

    assert_eq!(binary(&["--scenario", s, "--out", o]).0, 1);
    let (code, text) = binary(&["--scenario", s, "--out", o, "--allow-divergence", "gauss_seidel", "--workers", "2"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("diverged") && text.contains("converged"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"instance": {"generator": "state_estimation"}, "schemes": ["admm9"]}"#).unwrap();
    let (code, text) = binary(&["--scenario", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(code, 2);
    assert!(text.contains("admm9"));
    assert_eq!(binary(&["--scenario", s, "--out", o, "--workers", "0"]).0, 2);
    let nowhere = dir.path().join("none.json");
    fs::write(&nowhere, r#"{"instance": {"generator": "gauss_seidel_stress"}, "schemes": ["gbs"]}"#).unwrap();
    assert_eq!(binary(&["--scenario", nowhere.to_str().unwrap()]).0, 2);

    assert_eq!(binary(&["--scenario", dir.path().join("absent.json").to_str().unwrap(), "--out", o]).0, 3);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(binary(&["--scenario", s, "--out", blocker.join("sub").to_str().unwrap()]).0, 3);
    let missing_inst = dir.path().join("missing_inst.json");
    fs::write(&missing_inst, r#"{"instance": {"file": "nope.json"}, "schemes": ["gbs"]}"#).unwrap();
    assert_eq!(binary(&["--scenario", missing_inst.to_str().unwrap(), "--out", o]).0, 3);
}
