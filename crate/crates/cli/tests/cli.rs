use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_textcause");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: PathBuf) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

/// synthetic two-arm corpus, ingested, split and with a K = 5 topic model
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--kind", "immigration", "--n", "300", "--seed", "5", "--out", "syn"]);
    ok(d, &["ingest", "--input", "syn/corpus.jsonl", "--covariates", "age_group", "--out", "ing"]);
    ok(d, &["split", "--corpus", "ing/corpus.json", "--seed", "1", "--out", "sp"]);
    ok(d, &["fit-stm", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--k", "5", "--prevalence", "treatment", "--out", "stm"]);
    dir
}

const APPLY: [&str; 9] = [
    "apply-g", "--model", "stm/model.json", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--bootstrap", "200",
];

#[test]
fn topic_pipeline_reports_one_effect_per_topic() {
    let dir = prepared();
    let d = dir.path();
    let mut args = APPLY.to_vec();
    args.extend(["--out", "est"]);
    ok(d, &args);
    let effects = rows(d.join("est/effects.csv"));
    assert_eq!(effects.len(), 5);
    assert!(effects.iter().all(|r| &r[0] == "ATE" && &r[8] == "valid"));
    let svg = std::fs::read_to_string(d.join("est/effects.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<circle").count() == 5);
    assert_eq!(rows(d.join("est/theta.csv")).len(), 150);

    let log = json(d.join("est/log.json"));
    assert_eq!(log["lock_state"], "valid");
    assert_eq!(log["inputs"].as_array().unwrap().len(), 4);
    let config = std::fs::read_to_string(d.join("est/run_config.txt")).unwrap();
    assert!(config.starts_with("command = apply-g\n") && config.contains("prior-mode = average"));
    assert!(json(d.join("sp/split.lock.json"))["consumed"].as_bool().unwrap());
}

#[test]
fn second_use_of_the_test_set_is_refused() {
    let dir = prepared();
    let d = dir.path();
    let mut args = APPLY.to_vec();
    args.extend(["--out", "est"]);
    ok(d, &args);
    let again = run(d, &["estimate", "--model", "stm/model.json", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--out", "again"]);
    assert_eq!(again.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&again.stderr).contains("test set already used"));
    assert!(!d.join("again").exists());
    assert!(std::fs::read_dir(d).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with(".textcause")));

    let mut args = APPLY.to_vec();
    args.extend(["--out", "reused", "--i-know-this-invalidates-inference"]);
    ok(d, &args);
    assert!(rows(d.join("reused/effects.csv")).iter().all(|r| &r[8] == "invalidated"));
    assert_eq!(json(d.join("reused/log.json"))["lock_state"], "invalidated");
}

#[test]
fn modified_test_text_is_detected() {
    let dir = prepared();
    let d = dir.path();
    let mut corpus = json(d.join("ing/corpus.json"));
    let test_id = json(d.join("sp/split.json"))["test_ids"][0].clone();
    for doc in corpus["documents"].as_array_mut().unwrap() {
        if doc["id"] == test_id {
            doc["text"] = Value::String("something else entirely".into());
        }
    }
    std::fs::write(d.join("ing/edited.json"), corpus.to_string()).unwrap();
    let out = run(d, &["apply-g", "--model", "stm/model.json", "--corpus", "ing/edited.json", "--split", "sp/split.json", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test set modified"));
    assert!(!json(d.join("sp/split.lock.json"))["consumed"].as_bool().unwrap());
}

#[test]
fn training_diagnostics_leave_the_lock_alone_and_replay_exactly() {
    let dir = prepared();
    let d = dir.path();
    let mut args = APPLY.to_vec();
    args.extend(["--on", "train", "--out", "diag"]);
    ok(d, &args);
    assert!(!json(d.join("sp/split.lock.json"))["consumed"].as_bool().unwrap());
    assert!(rows(d.join("diag/effects.csv")).iter().all(|r| &r[8] == "not_applicable"));
    ok(d, &["--config", "diag/run_config.txt", "--out", "replay"]);
    for f in ["effects.csv", "theta.csv", "estimates.json"] {
        assert_eq!(std::fs::read(d.join("diag").join(f)).unwrap(), std::fs::read(d.join("replay").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn split_defaults_to_half() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "31", "--out", "syn"]);
    ok(d, &["ingest", "--input", "syn/corpus.jsonl", "--out", "ing"]);
    ok(d, &["split", "--corpus", "ing/corpus.json", "--out", "sp"]);
    let split = json(d.join("sp/split.json"));
    assert_eq!(split["proportion"], 0.5);
    let train = split["train_ids"].as_array().unwrap().len();
    assert!(train == 15 || train == 16);
    assert_eq!(train + split["test_ids"].as_array().unwrap().len(), 31);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "40", "--out", "syn"]);
    ok(d, &["ingest", "--input", "syn/corpus.jsonl", "--out", "ing"]);
    std::fs::write(d.join("split.txt"), "# ten percent for discovery\nproportion = 0.1\nseed = 3\ncorpus = ing/corpus.json\n").unwrap();
    ok(d, &["split", "--config", "split.txt", "--seed", "4", "--out", "sp"]);
    let split = json(d.join("sp/split.json"));
    assert_eq!(split["proportion"], 0.1);
    assert_eq!(split["seed"], 4);
    assert_eq!(split["train_ids"].as_array().unwrap().len(), 4);
}

#[test]
fn contract_violations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("in.csv"), "id,text\n1,hello there\n2,general kenobi\n").unwrap();
    let out = run(d, &["ingest", "--input", "in.csv", "--outcome-col", "score", "--out", "ing"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score"));
    assert!(!d.join("ing").exists());
    assert_eq!(run(d, &["split", "--out", "x"]).status.code(), Some(2));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn feature_pipeline_estimates_marginal_effects() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--kind", "features", "--n", "300", "--seed", "2", "--out", "syn"]);
    ok(d, &["ingest", "--input", "syn/corpus.jsonl", "--out", "ing"]);
    ok(d, &["split", "--corpus", "ing/corpus.json", "--out", "sp"]);
    ok(d, &["fit-sibp", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--k-max", "2", "--restarts", "4", "--out", "sibp"]);
    let stm_only = run(d, &["apply-g", "--model", "sibp/model.json", "--corpus", "ing/corpus.json", "--split", "sp/split.json", "--out", "x"]);
    assert_eq!(stm_only.status.code(), Some(2));
    ok(d, &[
        "infer-treatments", "--model", "sibp/model.json", "--corpus", "ing/corpus.json", "--split", "sp/split.json",
        "--interactions", "--bootstrap", "100", "--out", "est",
    ]);
    let effects = rows(d.join("est/effects.csv"));
    let kinds: Vec<&str> = effects.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(kinds, ["AMCE", "AMCE", "ACIE"]);
    // planted outcome coefficients are +2 and -1
    let mut points: Vec<f64> = effects[..2].iter().map(|r| r[3].parse().unwrap()).collect();
    points.sort_by(f64::total_cmp);
    assert!(points[0] < -0.5 && points[1] > 1.0, "{points:?}");
    assert_eq!(rows(d.join("est/treatments.csv"))[0].len(), 5);
}

#[test]
fn labs_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, &["aisv", "--out", "aisv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 randomizations, 3 distinct category sets, unstable: true"));
    assert_eq!(rows(d.join("aisv/randomizations.csv")).len(), 6);
    std::fs::write(d.join("same.csv"), "unit,t1,t0\na,x,y\nb,x,y\nc,x,y\nd,x,y\n").unwrap();
    ok(d, &["aisv", "--table", "same.csv", "--out", "same"]);
    assert_eq!(json(d.join("same/aisv.json"))["report"]["unstable"], false);

    ok(d, &["overfit", "--replications", "50", "--n-units", "60", "--out", "of"]);
    let report = json(d.join("of/overfit.json"));
    assert_eq!(report["locks_consumed"], 50);
    ok(d, &[
        "stability", "--synthetic-docs", "300", "--synthetic-vocab", "60", "--k", "3", "--sample-sizes", "150",
        "--reps", "2", "--out", "stab",
    ]);
    assert_eq!(rows(d.join("stab/stability.csv")).len(), 6);
    assert!(json(d.join("stab/stability.json"))["note"].as_str().unwrap().contains("local mode"));
}
