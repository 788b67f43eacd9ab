mod common;

use std::process::{Command, Output};

use rhomu_core::construct::{build_abstraction, build_nested_sequence, Abstraction, OutputPolicy};
use rhomu_core::plant::bundled;
use rhomu_core::synth::ControllerDfm;

fn rhomu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhomu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn abstract_output_reloads_to_the_same_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = rhomu(&["abstract", "EX1", "--i", "3", "--out", out]);
    assert_eq!(run.status.code(), Some(0));
    let plant = bundled::ex1();
    for i in 1..=3 {
        let text = std::fs::read_to_string(dir.path().join(format!("m{i}.json"))).unwrap();
        let loaded = Abstraction::from_json(&text).unwrap();
        assert_eq!(loaded, build_abstraction(&plant, i, OutputPolicy::Lexicographic).unwrap());
        assert!(dir.path().join(format!("m{i}.dot")).exists());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "abstract");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["inputs"][0]["name"], "bundled:EX1");
}

#[test]
fn nested_abstraction_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(rhomu(&["abstract", "ex3", "--i", "3", "--nested", "--out", out]).status.code(), Some(0));
    let seq = build_nested_sequence(&bundled::ex3(), 3).unwrap();
    for m in &seq.levels {
        let text = std::fs::read_to_string(dir.path().join(format!("m{}.json", m.window()))).unwrap();
        assert_eq!(&Abstraction::from_json(&text).unwrap(), m);
    }
    let nesting: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("nesting.json")).unwrap()).unwrap();
    assert_eq!(nesting["nested"], true);
}

#[test]
fn nesting_conflict_exits_with_violation() {
    let dir = tempfile::tempdir().unwrap();
    let plant = dir.path().join("conflict.json");
    std::fs::write(&plant, common::NESTING_CONFLICT).unwrap();
    let run = rhomu(&["abstract", plant.to_str().unwrap(), "--i", "2", "--nested"]);
    assert_eq!(run.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&run)).unwrap();
    assert_eq!(v["nesting"]["nested"], false);
    let verify = rhomu(&["verify", plant.to_str().unwrap(), "--i", "2"]);
    assert_eq!(verify.status.code(), Some(1));
    assert!(stdout(&verify).contains("VIOLATED  output_nested"));
    assert!(stdout(&verify).contains("n/a       gain_monotone"));
}

#[test]
fn verify_reports_every_property() {
    let run = rhomu(&["verify", "EX1", "--i", "2"]);
    assert_eq!(run.status.code(), Some(0));
    let text = stdout(&run);
    for property in ["output_match", "inclusion", "performance_chain", "output_nested", "gain_monotone", "completeness"] {
        assert!(text.contains(property), "missing {property}");
    }
}

#[test]
fn gain_with_weights_file() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.json");
    std::fs::write(&weights, r#"{"rho": {"a": 0, "b": 0}}"#).unwrap();
    let run = rhomu(&["gain", "EX1", "1", "--weights", weights.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&run)).unwrap();
    assert_eq!(v["gamma_hat"], "inf");
    assert_eq!(v["zero_reduction_finite"], false);
    assert_eq!(v["finiteness_agrees"], true);

    std::fs::write(&weights, r#"{"rho": {"zz": 1}}"#).unwrap();
    let bad = rhomu(&["gain", "EX1", "1", "--weights", weights.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn synthesized_controller_drives_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = rhomu(&["synthesize", "EX3", "--i", "2", "--out", out]);
    assert_eq!(run.status.code(), Some(0));
    let controller_path = dir.path().join("controller.json");
    let controller = ControllerDfm::from_json(&std::fs::read_to_string(&controller_path).unwrap()).unwrap();
    let sim = rhomu(&[
        "simulate",
        "EX3",
        "--controller",
        controller_path.to_str().unwrap(),
        "--T",
        "12",
        "--x0",
        "7",
    ]);
    assert_eq!(sim.status.code(), Some(0));
    let text = stdout(&sim);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[0][5], controller.states[0]);
    // the controlled plant settles at zero cost
    assert_eq!(rows.last().unwrap()[4], "0");
}

#[test]
fn synthesis_refuses_infinite_gain() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.json");
    std::fs::write(&weights, r#"{"rho": {"a": 0, "b": 0}}"#).unwrap();
    let run = rhomu(&["synthesize", "EX1", "--i", "1", "--weights", weights.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stdout(&run).contains("refused"));
}

#[test]
fn usage_errors() {
    assert_eq!(rhomu(&[]).status.code(), Some(2));
    assert_eq!(rhomu(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rhomu(&["verify", "missing.json", "--i", "1"]).status.code(), Some(2));
    assert_eq!(rhomu(&["simulate", "EX1", "--T", "2", "--x0", "0"]).status.code(), Some(2));
    assert_eq!(rhomu(&["simulate", "EX1", "--T", "1", "--x0", "0", "--inputs", "q"]).status.code(), Some(2));
}

#[test]
fn codec_dump_for_large_alphabet_skips_search() {
    let run = rhomu(&["codec", "--p", "6"]);
    assert_eq!(run.status.code(), Some(0));
    let text = stdout(&run);
    assert_eq!(text.lines().next().unwrap(), "0,5,4,3,2,1");
    assert!(text.contains("minimality search skipped"));
}
