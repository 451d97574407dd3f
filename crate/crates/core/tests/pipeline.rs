use rarecast::data::{split_dataset, SplitSpec};
use rarecast::encode::{embedding_provider, encode_dataset, EncoderState};
use rarecast::learners::{ForestParams, GbtParams};
use rarecast::pipeline::{fit_pipeline, fit_pipeline_with_diagnostics, PipelineConfig};
use rarecast::synth::{generate_dataset, GeneratorConfig};
use rarecast::Pipeline;

fn small_config() -> PipelineConfig {
    PipelineConfig {
        gbt: GbtParams {
            n_trees: 30,
            ..Default::default()
        },
        rf: ForestParams {
            n_trees: 30,
            max_depth: 8,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn data(n: usize, seed: u64) -> rarecast::data::Dataset {
    generate_dataset(&GeneratorConfig {
        n_records: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn every_meta_feature_comes_from_a_fold_that_excluded_its_record() {
    let train = data(1200, 1);
    let (_, diag) = fit_pipeline_with_diagnostics::<f64>(&train, &small_config()).unwrap();
    let audit = &diag.audit;
    assert!(audit.is_clean());
    assert_eq!(audit.fold_train_rows.len(), 5);
    for (i, &fold) in audit.predicted_by.iter().enumerate() {
        assert_eq!(fold, audit.fold_of[i]);
        assert!(!audit.fold_train_rows[fold].contains(&i), "record {i} trained fold {fold}");
    }
    // Each fold trains on exactly the complement of its held-out rows.
    for (k, rows) in audit.fold_train_rows.iter().enumerate() {
        let complement: Vec<usize> = (0..train.len()).filter(|&i| audit.fold_of[i] != k).collect();
        assert_eq!(rows, &complement);
    }
}

#[test]
fn encoder_state_is_unchanged_by_encoding_held_out_data() {
    let all = data(1500, 2);
    let (train, evals) = split_dataset(&all, &SplitSpec::scaled_to(all.len(), 0)).unwrap();
    let provider = embedding_provider("mock", 16).unwrap();
    let state = EncoderState::<f64>::fit(&train, provider.as_ref()).unwrap();
    let before = state.hash();
    let snapshot = state.clone();
    for e in &evals {
        let fm = encode_dataset(e, &state, provider.as_ref()).unwrap();
        assert!(fm.tabular.is_finite() && fm.embedding.is_finite());
    }
    assert_eq!(state.hash(), before);
    assert_eq!(state, snapshot);
}

#[test]
fn standardized_training_columns_are_exactly_z_scored() {
    let train = data(900, 4);
    let provider = embedding_provider("none", 0).unwrap();
    let state = EncoderState::<f64>::fit(&train, provider.as_ref()).unwrap();
    let fm = encode_dataset(&train, &state, provider.as_ref()).unwrap();
    let n = fm.tabular.rows() as f64;
    for col in &state.continuous {
        let j = fm.tabular_names.iter().position(|c| c == &col.name).unwrap();
        let values = fm.tabular.column(j);
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if col.standardizer.std == 0.0 {
            assert!(values.iter().all(|v| *v == 0.0));
        } else {
            assert!(mean.abs() < 1e-9, "{}: mean {mean}", col.name);
            assert!((std - 1.0).abs() < 1e-9, "{}: std {std}", col.name);
        }
    }
}

#[test]
fn artifact_round_trip_preserves_predictions() {
    let all = data(1200, 6);
    let (train, evals) = split_dataset(&all, &SplitSpec::scaled_to(all.len(), 0)).unwrap();
    let p: Pipeline = fit_pipeline(&train, &small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    p.save(&path).unwrap();
    let q = Pipeline::load(&path).unwrap();
    assert_eq!(p.hash(), q.hash());
    for e in &evals {
        assert_eq!(p.predict_dataset(e).unwrap(), q.predict_dataset(e).unwrap());
    }
}

#[test]
fn tampered_artifact_is_rejected() {
    let train = data(600, 8);
    let p: Pipeline = fit_pipeline(&train, &small_config()).unwrap();
    let text = p.to_json().unwrap().replacen("rarecast-pipeline", "something-else", 1);
    assert!(Pipeline::from_json(&text).is_err());
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let all = data(1000, 9);
    let (train, evals) = split_dataset(&all, &SplitSpec::scaled_to(all.len(), 0)).unwrap();
    let config = small_config();
    let p64: Pipeline = fit_pipeline(&train, &config).unwrap();
    let p32: rarecast::pipeline::FittedPipeline<f32> = fit_pipeline(&train, &config).unwrap();
    let a = p64.predict_dataset(&evals[0]).unwrap();
    let b = p32.predict_dataset(&evals[0]).unwrap();
    let mean_rel: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.predicted_funding_usd / y.predicted_funding_usd - 1.0).abs())
        .sum::<f64>()
        / a.len() as f64;
    assert!(mean_rel < 0.05, "mean relative gap {mean_rel}");
}
