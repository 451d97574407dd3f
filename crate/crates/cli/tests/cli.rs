use std::path::Path;

use rarecast::evalkit::EvaluationReport;
use rarecast::schema::{FeatureSchema, Origin};
use rarecast_cli::{run_command, run_record_path, RunRecord, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["rarecast"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert_eq!(run(&["--seed", "11", "generate", "--out", s(out), "--n-records", "600"]), EXIT_OK);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.truth.json").exists());
    let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(run_record_path(&a)).unwrap()).unwrap();
    assert_eq!(record.command, "generate");
    assert_eq!(record.config.generator.seed, 11);
    assert_eq!(record.config.generator.n_records, 600);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["generate", "--out", "x.csv", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    assert_eq!(run(&["generate", "--out", s(&out), "--positive-rate", "1.5"]), EXIT_USAGE);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let model = dir.path().join("m.json");
    assert_eq!(run(&["train", "--data", s(&missing), "--model", s(&model)]), EXIT_DATA);
    assert!(!model.exists());
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let report = dir.path().join("r.json");
    let preds = dir.path().join("p.csv");
    assert_eq!(run(&["generate", "--out", s(&data), "--n-records", "1500"]), EXIT_OK);
    let fast = ["--gbt-trees", "30", "--rf-trees", "30", "--folds", "3"];
    let mut train = vec!["train", "--data", s(&data), "--model", s(&model)];
    train.extend(fast);
    assert_eq!(run(&train), EXIT_OK);
    assert_eq!(run(&["evaluate", "--model", s(&model), "--data", s(&data), "--report", s(&report)]), EXIT_OK);

    let r = EvaluationReport::load(&report).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(r.rows.iter().all(|row| row.mape.is_finite() && row.n > 0));
    assert_eq!(r.class_table.as_ref().unwrap().len(), 5);

    assert_eq!(run(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&preds)]), EXIT_OK);
    let text = std::fs::read_to_string(&preds).unwrap();
    assert!(text.starts_with("id,predicted_funding_usd,success_prob,predicted_success,funding_class,error"));
    assert_eq!(text.lines().count(), 1501);

    let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(run_record_path(&report)).unwrap()).unwrap();
    assert_eq!(record.inputs.len(), 2);
    assert!(record.inputs.iter().all(|(_, h)| h.len() == 64));
}

#[test]
fn schema_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let reduced = dir.path().join("schema.json");
    FeatureSchema::default().without(&[], &[Origin::LlmDerived]).save(&reduced).unwrap();
    assert_eq!(run(&["generate", "--out", s(&data), "--n-records", "800"]), EXIT_OK);
    assert_eq!(
        run(&["train", "--data", s(&data), "--model", s(&model), "--gbt-trees", "10", "--rf-trees", "10", "--folds", "2"]),
        EXIT_OK
    );
    let report = dir.path().join("r.json");
    let code = run(&["--schema", s(&reduced), "evaluate", "--model", s(&model), "--data", s(&data), "--report", s(&report)]);
    assert_eq!(code, EXIT_DATA);
    assert!(!report.exists());
}

#[test]
fn enrich_fills_text_features() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let out = dir.path().join("enriched.csv");
    let cache = dir.path().join("cache.jsonl");
    assert_eq!(run(&["generate", "--out", s(&raw), "--n-records", "200", "--llm-as-text"]), EXIT_OK);
    assert_eq!(run(&["enrich", "--data", s(&raw), "--out", s(&out), "--cache", s(&cache)]), EXIT_OK);
    assert!(out.exists());
    assert!(std::fs::metadata(&cache).unwrap().len() > 0);
    assert_eq!(run(&["enrich", "--data", s(&raw), "--out", s(&out), "--provider", "psychic"]), EXIT_USAGE);
}
