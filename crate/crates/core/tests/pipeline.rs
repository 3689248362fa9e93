mod common;

use std::fs;
use std::process::Command;

use holodisc::birkhoff::ExistenceVerdict;
use holodisc::pipeline::{format_report, run, sweep, sweep_outcome, Outcome, RunOptions, RunRecord, RECORDS_FILE};

use common::*;

fn opts(dir: &tempfile::TempDir) -> RunOptions {
    RunOptions { out: dir.path().to_path_buf(), seed: 7 }
}

fn records(dir: &tempfile::TempDir) -> Vec<RunRecord> {
    fs::read_to_string(dir.path().join(RECORDS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn lune_reaches_the_holomorphic_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(&scenario_path("lune_cp1"), &opts(&dir)).unwrap();
    let e = rec.energy.as_ref().unwrap();
    assert!(e.converged);
    assert!(e.dbar_residual < 0.1 * e.dirichlet.sqrt());
    assert!((e.area - std::f64::consts::PI).abs() < 0.05);
    let idx = rec.indices.as_ref().unwrap();
    assert_eq!(idx.kappas, vec![1]);
    assert_eq!(rec.mu, Some(1));
    assert_eq!(rec.verdicts.existence, Some(ExistenceVerdict::AllAtLeastOne));
    assert_eq!(rec.verdicts.griffiths_positive, Some(true));
    assert_eq!(rec.verdicts.virtual_dimension, Some(0));
    assert_eq!(rec.outcome.exit_code(), 0);
    rec.check_consistency(2).unwrap();
    for name in rec.artifacts.values() {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert_eq!(records(&dir), vec![rec]);
}

#[test]
fn projective_plane_lune_has_two_unit_indices() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(&scenario_path("lune_cp2"), &opts(&dir)).unwrap();
    assert_eq!(rec.indices.unwrap().kappas, vec![1, 1]);
    assert_eq!(rec.mu, Some(2));
    assert_eq!(rec.outcome, Outcome::Verdict);
}

#[test]
fn degenerate_scenario_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run(&scenario_path("degenerate"), &opts(&dir)).unwrap();
    assert_eq!(rec.mu, Some(0));
    assert_eq!(rec.energy.unwrap().dirichlet, 0.0);
    assert_eq!(rec.verdicts.existence, Some(ExistenceVerdict::Inconclusive));
    assert_eq!(rec.outcome.exit_code(), 2);
}

#[test]
fn literal_corner_rule_is_available() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path("degenerate")).unwrap();
    let text = text.replace("\"mesh\"", "\"indices\": {\"corners\": \"uniform\"},\n  \"mesh\"");
    let path = dir.path().join("uniform.json");
    fs::write(&path, text).unwrap();
    let rec = run(&path, &opts(&dir)).unwrap();
    assert_eq!(rec.mu, Some(-1));
    assert_eq!(rec.verdicts.existence, Some(ExistenceVerdict::AllAtMostMinusOne));
}

#[test]
fn misplaced_point_fails_validation_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path("flat_triangle")).unwrap();
    let text = text.replace("[[[1, 0]], [[0, 1]]]", "[[[1, 0]], [[0, 2]]]");
    let path = dir.path().join("malformed.json");
    fs::write(&path, text).unwrap();
    let err = run(&path, &opts(&dir)).unwrap_err().to_string();
    assert!(err.contains("validate") && err.contains("x_2"), "{err}");
    let recs = records(&dir);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].outcome, Outcome::Error);
}

#[test]
fn reports_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&scenario_path("flat_triangle"), &opts(&a)).unwrap();
    let rb = run(&scenario_path("flat_triangle"), &opts(&b)).unwrap();
    let name = &ra.artifacts["report"];
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    assert_eq!(format_report(&ra), format_report(&rb));
    assert_eq!(ra.scenario_hash, rb.scenario_hash);
    assert_eq!(ra.seed, 7);
}

#[test]
fn records_are_appended() {
    let dir = tempfile::tempdir().unwrap();
    run(&scenario_path("degenerate"), &opts(&dir)).unwrap();
    run(&scenario_path("degenerate"), &opts(&dir)).unwrap();
    let recs = records(&dir);
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].mu, recs[1].mu);
}

#[test]
fn empty_sweep_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let recs = sweep(&scenario_path("lune_cp1"), Some(&[]), &opts(&dir)).unwrap();
    assert!(recs.is_empty());
    assert_eq!(sweep_outcome(&recs).exit_code(), 0);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path("degenerate")).unwrap().replace("\"h\": 0.3", "\"h\": 1.2");
    let path = dir.path().join("coarse.json");
    fs::write(&path, text).unwrap();
    let recs = sweep(&path, Some(&[0, 1]), &opts(&dir)).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].outcome, Outcome::Error);
    assert!(recs[0].error.as_ref().unwrap().contains("mesh"));
    assert_eq!(recs[1].outcome, Outcome::Inconclusive);
    assert_eq!(sweep_outcome(&recs), Outcome::Error);
    let csv = fs::read_to_string(dir.path().join("coarse_convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "level,h,dirichlet,area,conformality_defect,dbar_residual,perpendicularity_defect,kappas");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].ends_with(",0"));
}

#[test]
fn sweep_keeps_kappas_across_levels() {
    let dir = tempfile::tempdir().unwrap();
    let recs = sweep(&scenario_path("flat_triangle"), None, &opts(&dir)).unwrap();
    assert_eq!(recs.len(), 2);
    for r in &recs {
        assert_eq!(r.indices.as_ref().unwrap().kappas, vec![0]);
    }
    assert!(recs[1].h < recs[0].h);
}

#[test]
fn cli_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_holodisc");
    let status = |args: &[&str]| {
        Command::new(bin).args(args).arg("--out").arg(dir.path()).arg("--threads").arg("1").output().unwrap()
    };
    let lune = scenario_path("lune_cp1");
    let out = status(&["run", lune.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("existence_verdict: AllAtLeastOne"));
    let degenerate = scenario_path("degenerate");
    assert_eq!(status(&["run", degenerate.to_str().unwrap(), "--seed", "3"]).status.code(), Some(2));
    assert_eq!(status(&["run", "missing.json"]).status.code(), Some(1));
    assert_eq!(status(&["sweep", degenerate.to_str().unwrap(), "--levels"]).status.code(), Some(0));
    assert_eq!(status(&["frobnicate"]).status.code(), Some(1));
}
