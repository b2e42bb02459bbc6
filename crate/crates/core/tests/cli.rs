use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = "seed = 7
dataset.kind = \"counts\"
dataset.n_a = 50
dataset.n_b = 50
learner.kind = \"oracle\"
experiment.b = 30
experiment.z = 5
experiment.q = 20
campaign.n_start = 20
campaign.n_stop = 80
campaign.step = 20
campaign.policy = \"random-action\"
campaign.holdout = 20
decide.n = 20
suitability.reps = 5
suitability.major = 18
suitability.minor = 2
suitability.holdout = 20
robustness.b_total = 30
robustness.sizes = [10, 20]
robustness.reps = 3
";

fn gpaml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpaml")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{TOY}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(args: &[&str]) {
    let out = gpaml(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_owned).collect()
}

#[test]
fn balance_experiment_writes_one_row_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    run_ok(&["balance-experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    let rows = csv_rows(&out.join("observations.csv"));
    assert_eq!(rows.len(), 150);
    assert_eq!(header(&out.join("observations.csv"))[..5], ["block", "rep", "n_a", "n_b", "score"]);
    for name in ["manifest.json", "resolved.toml", "summary.txt"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn tiny_design_gives_four_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let cfg_text = std::fs::read_to_string(&cfg).unwrap().replace("experiment.b = 30", "experiment.b = 2").replace("experiment.z = 5", "experiment.z = 2");
    std::fs::write(&cfg, cfg_text).unwrap();
    run_ok(&["balance-experiment", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("observations.csv"));
    assert_eq!(rows.len(), 4);
    let blocks: std::collections::HashSet<(String, String)> = rows.iter().map(|r| (r[2].clone(), r[3].clone())).collect();
    assert_eq!(blocks.len(), 2);
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment.bogus_knob = 4\n");
    let out = gpaml(&["balance-experiment", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_knob"));
}

#[test]
fn invalid_design_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("experiment.b = 30", "experiment.b = 0");
    std::fs::write(&cfg, text).unwrap();
    let out = gpaml(&["balance-experiment", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decide_reports_every_action_and_the_choice() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let bal = tmp.path().join("bal");
    let dec = tmp.path().join("dec");
    run_ok(&["balance-experiment", "--config", &cfg, "--out", bal.to_str().unwrap()]);
    let obs = bal.join("observations.csv");
    run_ok(&["decide", "--config", &cfg, "--out", dec.to_str().unwrap(), "--observations", obs.to_str().unwrap()]);

    let path = dec.join("decision.csv");
    assert_eq!(header(&path), ["k", "n_a", "n_b", "ending_prop_a", "G"]);
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 21);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        let na: usize = r[1].parse().unwrap();
        let nb: usize = r[2].parse().unwrap();
        assert_eq!((na, nb), (20 - i, i));
    }
    let choice = csv_rows(&dec.join("choice.csv"));
    assert_eq!(choice.len(), 1);
    let best = rows
        .iter()
        .max_by(|a, b| a[4].parse::<f64>().unwrap().total_cmp(&b[4].parse::<f64>().unwrap()))
        .unwrap();
    assert_eq!(choice[0][1..], best[1..3]);
    assert_eq!(csv_rows(&dec.join("cone.csv")).len(), 21 * 20);
}

#[test]
fn decide_rejects_an_empty_observation_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let obs = tmp.path().join("empty.csv");
    std::fs::write(&obs, "").unwrap();
    let out = gpaml(&["decide", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "--observations", obs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn campaign_trace_has_initial_row_plus_one_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    run_ok(&["campaign", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("trace.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn suitability_writes_one_row_per_subsample() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    run_ok(&["suitability", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("suitability.csv"));
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| r[0] == "A").count(), 5);
}

#[test]
fn robustness_writes_one_row_per_size_and_rep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    run_ok(&["robustness", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("robustness.csv"));
    assert_eq!(rows.len(), 6);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["campaign", "--config", &cfg, "--out", a.to_str().unwrap()]);
    run_ok(&["campaign", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "2"]);
    for name in ["trace.csv", "manifest.json", "resolved.toml", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn synthetic_forest_separates_categories_well() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    std::fs::write(
        &path,
        "seed = 1\n\
         dataset.kind = \"synthetic\"\n\
         dataset.n_per_category = 500\n\
         dataset.separation_a = 10.0\n\
         learner.kind = \"forest\"\n\
         learner.tree_count = 20\n\
         suitability.reps = 2\n\
         suitability.major = 90\n\
         suitability.minor = 90\n\
         suitability.holdout = 100\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    run_ok(&["suitability", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for r in csv_rows(&out.join("suitability.csv")) {
        let ccr: f64 = r[2].parse().unwrap();
        assert!(ccr > 0.95, "ccr {ccr}");
    }
}
