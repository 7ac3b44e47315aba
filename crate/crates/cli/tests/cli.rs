use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn molforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molforge"))
        .args(args)
        .env_remove("MOLFORGE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_includes_build_hash() {
    let o = molforge(&["--version"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("molforge 0.1.0 ("), "{s}");
}

#[test]
fn catalog_json_lists_every_family() {
    let o = molforge(&["catalog", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 52);
    assert_eq!(arr[12]["index"], 13);
}

#[test]
fn usage_errors_exit_two() {
    let o = molforge(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("molforge-error[usage]:"), "{}", stderr(&o));

    let o = molforge(&["generate-data", "--plan-only", "--scale", "paper", "--jobs", "0", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_reports_the_full_corpus() {
    let o = molforge(&["generate-data", "--plan-only", "--scale", "paper", "--out", "unused"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("5200 parameterized equations"), "{}", stdout(&o));
}

#[test]
fn refuses_non_empty_output_without_force() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keep.txt"), "x").unwrap();
    let o = molforge(&["generate-data", "--out", path(dir.path()), "--families", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"));
    assert!(dir.path().join("keep.txt").exists());
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let ic = dir.path().join("ic.txt");
    fs::write(&ic, "0.5").unwrap();
    let o = molforge(&["infer", "--ckpt", path(&dir.path().join("nope")), "--family", "1", "--ic", path(&ic)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("molforge-error["), "{}", stderr(&o));
}

/// Generate, train a few steps, evaluate and infer on a two-family corpus.
#[test]
fn pipeline_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let cfg = root.path().join("build.json");
    fs::write(
        &cfg,
        r#"{"train_params": 2, "train_ics_ode": 1, "train_ics_pde": 1, "test_params": 1, "test_ics": 1, "families": [1, 13]}"#,
    )
    .unwrap();

    let o = molforge(&["generate-data", "--config", path(&cfg), "--out", path(&data), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("manifest.json").exists());

    let o = molforge(&["train", "--data", path(&data), "--out", path(&run), "--max-steps", "3", "--batch-size", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run.join("metrics.csv").exists());
    let ckpt = run.join("model");

    let report = root.path().join("id.csv");
    let plots = root.path().join("plots");
    let o = molforge(&[
        "evaluate", "--data", path(&data), "--ckpt", path(&ckpt), "--protocol", "id",
        "--report", path(&report), "--plots", path(&plots),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("Total Average,")), "{csv}");
    let pngs: Vec<String> = fs::read_dir(&plots)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(pngs.len(), 1);
    assert!(pngs[0].starts_with("family_13_test_"), "{pngs:?}");

    let ic = root.path().join("ic.txt");
    let profile: Vec<String> = (0..128).map(|j| format!("{}", (j as f64 * 0.05).sin())).collect();
    fs::write(&ic, profile.join("\n")).unwrap();
    let o = molforge(&["infer", "--ckpt", path(&ckpt), "--family", "13", "--ic", path(&ic)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("t,x,u"));
    assert!(s.lines().last().unwrap().starts_with("# description:"));
    assert!(s.lines().filter(|l| !l.starts_with('#')).count() > 100);
}
