use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_neuroglm");

const SMALL: &str = r#"{
  "phantom": {"n_subjects": 12, "dims": [10, 10, 8], "nt": 120,
    "planted_regions": [
      {"center": [3, 5, 4], "radius": 1.5, "base_amplitude": 1.5, "score_slope": 0.15},
      {"center": [6, 5, 4], "radius": 1.5, "base_amplitude": -1.5, "score_slope": -0.15}]},
  "experiment": {"n_iter": 20, "test_fraction": 0.2}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).env("NEUROGLM_LOG", "error").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn pipeline(dir: &Path, jobs: &str, seed: &str) {
    let common = ["--config", "cfg.json", "--jobs", jobs, "--seed", seed];
    let with = |a: &[&'static str]| -> Vec<&str> { a.iter().chain(&common).copied().collect() };
    ok(dir, &with(&["simulate", "--out", "sim"]));
    ok(dir, &with(&["tmap", "--cohort", "sim/cohort.json", "--out", "sim/tmaps"]));
    ok(dir, &with(&["mask", "--tmaps", "sim/tmaps", "--out", "mask"]));
    ok(dir, &with(&["classify", "--cohort", "sim/cohort.json", "--out", "res"]));
    ok(dir, &with(&["localize", "--selections", "res/selections.json", "--out", "loc"]));
    ok(dir, &with(&["report", "--results", "res", "--out", "rep"]));
}

fn small_workspace() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("cfg.json"), SMALL).unwrap();
    d
}

#[test]
fn end_to_end_outputs_and_provenance() {
    let d = small_workspace();
    pipeline(d.path(), "2", "5");
    let report = fs::read_to_string(d.path().join("rep/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "combo,classifier,mean_auc,sd_auc,n_effective");
    assert_eq!(lines.len(), 11);
    let pairwise = fs::read_to_string(d.path().join("rep/pairwise.csv")).unwrap();
    assert_eq!(pairwise.lines().count(), 1 + 45);
    assert!(fs::read_to_string(d.path().join("rep/report.svg")).unwrap().starts_with("<svg"));
    for stage in ["sim", "sim/tmaps", "mask", "res", "loc", "rep"] {
        let cfg: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(stage).join("resolved_config.json")).unwrap())
                .unwrap();
        assert_eq!(cfg["experiment"]["seed"], 5, "{stage}");
        assert_eq!(cfg["phantom"]["seed"], 5, "{stage}");
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(stage).join("input_manifest.json")).unwrap())
                .unwrap();
        let inputs = m["inputs"].as_array().unwrap();
        assert!(inputs.iter().all(|e| e["sha256"].as_str().unwrap().len() == 64), "{stage}");
        assert_eq!(inputs[0]["path"], "cfg.json");
    }
    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("res/selections.json")).unwrap()).unwrap();
    assert_eq!(sel["combos"].as_array().unwrap().len(), 5);
    assert_eq!(sel["combos"][4]["speech"].as_array().unwrap().len(), 20);
}

#[test]
fn rerun_and_thread_count_leave_report_unchanged() {
    let a = small_workspace();
    let b = small_workspace();
    pipeline(a.path(), "1", "3");
    pipeline(b.path(), "4", "3");
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in
        ["rep/report.csv", "rep/pairwise.csv", "res/distributions.json", "res/selections.json", "loc/localization.json"]
    {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    ok(a.path(), &["report", "--results", "res", "--out", "rep2", "--config", "cfg.json"]);
    assert_eq!(read(a.path(), "rep/report.csv"), read(a.path(), "rep2/report.csv"));
}

#[test]
fn classify_without_tmaps_exits_2_naming_path() {
    let d = small_workspace();
    ok(d.path(), &["simulate", "--config", "cfg.json", "--out", "sim"]);
    let o = run(d.path(), &["classify", "--config", "cfg.json", "--cohort", "sim/cohort.json", "--out", "res"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "missing_input");
    assert_eq!(err["path"], "sim/tmaps/tmaps.json");
    assert!(!d.path().join("res").exists());
}

#[test]
fn demographics_only_needs_no_tmaps() {
    let d = small_workspace();
    ok(d.path(), &["simulate", "--config", "cfg.json", "--out", "sim"]);
    fs::write(
        d.path().join("demo.json"),
        r#"{"combos": ["demographics"], "experiment": {"n_iter": 10, "test_fraction": 0.2}}"#,
    )
    .unwrap();
    ok(d.path(), &["classify", "--config", "demo.json", "--cohort", "sim/cohort.json", "--out", "res"]);
    ok(d.path(), &["report", "--results", "res", "--out", "rep"]);
    assert_eq!(fs::read_to_string(d.path().join("rep/report.csv")).unwrap().lines().count(), 3);
}

#[test]
fn invalid_config_exits_3() {
    let d = small_workspace();
    fs::write(d.path().join("bad.json"), r#"{"experiment": {"test_fraction": 0.7}}"#).unwrap();
    let o = run(d.path(), &["simulate", "--config", "bad.json", "--out", "sim"]);
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");

    fs::write(d.path().join("typo.json"), r#"{"experment": {}}"#).unwrap();
    assert_eq!(run(d.path(), &["simulate", "--config", "typo.json"]).status.code(), Some(3));
    assert_eq!(run(d.path(), &["simulate", "--config", "absent.json"]).status.code(), Some(2));
}

#[test]
fn rank_deficient_design_exits_4() {
    // a 1.8 s high-pass cutoff adds enough cosine columns to use up all 120 scans
    let d = small_workspace();
    ok(d.path(), &["simulate", "--config", "cfg.json", "--out", "sim"]);
    let cfg = SMALL.replacen('{', r#"{"design": {"highpass_cutoff_seconds": 1.8},"#, 1);
    fs::write(d.path().join("hp.json"), cfg).unwrap();
    let o = run(d.path(), &["tmap", "--config", "hp.json", "--cohort", "sim/cohort.json", "--out", "t"]);
    assert_eq!(o.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "dof");
}

#[test]
fn default_phantom_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["simulate", "--out", "sim"]);
    ok(p, &["tmap", "--cohort", "sim/cohort.json", "--out", "sim/tmaps"]);
    ok(p, &["mask", "--tmaps", "sim/tmaps", "--out", "mask"]);
    fs::write(p.join("c.json"), r#"{"experiment": {"n_iter": 100}}"#).unwrap();
    ok(p, &["classify", "--config", "c.json", "--cohort", "sim/cohort.json", "--out", "res"]);
    ok(p, &["report", "--results", "res", "--out", "rep"]);
    ok(p, &["localize", "--selections", "res/selections.json", "--mask", "mask/speech_mask.nii", "--out", "loc"]);
    let loc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("loc/localization.json")).unwrap()).unwrap();
    assert!(!loc["selected_voxels"].as_array().unwrap().is_empty());
    let report = fs::read_to_string(p.join("rep/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 11);
    let all_svc: f64 =
        report.lines().find(|l| l.starts_with("all,svc,")).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(all_svc >= 0.85, "{report}");
}
