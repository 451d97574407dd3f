//! Stacked funding model and success calibration.
//!
//! Base learners (boosted trees and a random forest) see the tabular block
//! and predict log10 funding. Their K-fold out-of-fold predictions, together
//! with the text embeddings, train a ridge meta-model. A one-dimensional
//! logistic calibrator maps the meta-model's out-of-fold log10 estimate to a
//! success probability, thresholded with `p >= threshold`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classes::{funding_class, FundingClass};
use crate::data::{Dataset, FounderRecord};
use crate::encode::{embedding_provider, encode_dataset, EmbeddingProvider, EncoderState, DEFAULT_EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::learners::{ForestParams, GbtParams, GradientBoostedTrees, LinearModel, LogisticModel, RandomForest};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Real;

pub const ARTIFACT_FORMAT: &str = "rarecast-pipeline";
pub const ARTIFACT_VERSION: u32 = 1;

/// How base predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMode {
    /// Ridge regression over base predictions and embeddings.
    Linear,
    /// Unweighted mean of the base predictions.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gbt: GbtParams,
    pub rf: ForestParams,
    pub use_gbt: bool,
    pub use_rf: bool,
    pub meta_mode: MetaMode,
    pub meta_ridge_lambda: f64,
    pub logistic_ridge_lambda: f64,
    pub oof_folds: usize,
    pub threshold: f64,
    pub embedding_provider: String,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gbt: GbtParams::default(),
            rf: ForestParams::default(),
            use_gbt: true,
            use_rf: true,
            meta_mode: MetaMode::Linear,
            meta_ridge_lambda: 1e-6,
            logistic_ridge_lambda: 1e-3,
            oof_folds: 5,
            threshold: 0.8,
            embedding_provider: "mock".into(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oof_folds < 2 {
            return Err(Error::Param(format!("oof_folds must be >= 2, got {}", self.oof_folds)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Param(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if !self.use_gbt && !self.use_rf {
            return Err(Error::Param("at least one base learner is required".into()));
        }
        Ok(())
    }

    fn gbt_params(&self, stage: u64) -> GbtParams {
        GbtParams {
            seed: rng::derive_seed(rng::derive_seed_str(self.seed, "gbt"), stage),
            ..self.gbt
        }
    }

    fn rf_params(&self, stage: u64) -> ForestParams {
        ForestParams {
            seed: rng::derive_seed(rng::derive_seed_str(self.seed, "rf"), stage),
            ..self.rf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaModel<T> {
    Linear { model: LinearModel<T> },
    Average,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub data_hash: String,
    pub n_records: usize,
    pub seed: u64,
}

/// Trained artifact; everything needed to reproduce predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline<T> {
    pub format: String,
    pub version: u32,
    pub config: PipelineConfig,
    pub encoder: EncoderState<T>,
    pub gbt: Option<GradientBoostedTrees<T>>,
    pub rf: Option<RandomForest<T>>,
    pub meta: MetaModel<T>,
    pub calibrator: LogisticModel<T>,
    pub threshold: f64,
    pub fingerprint: TrainingFingerprint,
}

/// Out-of-fold bookkeeping produced while fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct OofAudit {
    /// Fold holding each training record out.
    pub fold_of: Vec<usize>,
    /// Rows each fold's base learners were trained on.
    pub fold_train_rows: Vec<Vec<usize>>,
    /// Fold whose models produced each record's meta-features.
    pub predicted_by: Vec<usize>,
}

impl OofAudit {
    /// True iff no record's meta-feature came from a model trained on it.
    pub fn is_clean(&self) -> bool {
        self.predicted_by.iter().enumerate().all(|(i, &k)| {
            k == self.fold_of[i] && self.fold_train_rows[k].binary_search(&i).is_err()
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitDiagnostics<T> {
    pub audit: OofAudit,
    /// Base-learner channels in meta input order (gbt, rf as enabled).
    pub oof_channels: Vec<Vec<T>>,
    /// Meta-model estimate of log10 funding on the out-of-fold inputs.
    pub oof_estimate: Vec<T>,
}

pub fn fit_pipeline<T: Real>(train: &Dataset, config: &PipelineConfig) -> Result<FittedPipeline<T>> {
    fit_pipeline_with_diagnostics(train, config).map(|(p, _)| p)
}

/// Assigns each of `n` rows to one of `k` folds via a seeded shuffle.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(Error::Param(format!("cannot form {k} folds from {n} records")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream_str(seed, "folds"));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(fold_of)
}

/// Out-of-fold base predictions for a given fold assignment.
pub fn oof_predictions<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    fold_of: &[usize],
    config: &PipelineConfig,
) -> Result<(Vec<Vec<T>>, OofAudit)> {
    let k = fold_of.iter().copied().max().map_or(0, |m| m + 1);
    let n = y.len();
    let folds: Vec<Result<(Vec<usize>, Vec<usize>, Vec<Vec<T>>)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let xt = x.select_rows(&train_rows);
            let yt: Vec<T> = train_rows.iter().map(|&i| y[i]).collect();
            let xh = x.select_rows(&held);
            let mut channels = Vec::new();
            if config.use_gbt {
                let m = GradientBoostedTrees::fit(&xt, &yt, &config.gbt_params(fold as u64 + 1))?;
                channels.push(m.predict(&xh)?);
            }
            if config.use_rf {
                let m = RandomForest::fit(&xt, &yt, &config.rf_params(fold as u64 + 1))?;
                channels.push(m.predict(&xh)?);
            }
            Ok((train_rows, held, channels))
        })
        .collect();
    let width = usize::from(config.use_gbt) + usize::from(config.use_rf);
    let mut out = vec![vec![T::zero(); n]; width];
    let mut fold_train_rows = Vec::with_capacity(k);
    let mut predicted_by = vec![usize::MAX; n];
    for (fold, res) in folds.into_iter().enumerate() {
        let (train_rows, held, channels) = res?;
        for (c, preds) in channels.into_iter().enumerate() {
            for (&i, p) in held.iter().zip(preds) {
                out[c][i] = p;
            }
        }
        for &i in &held {
            predicted_by[i] = fold;
        }
        fold_train_rows.push(train_rows);
    }
    Ok((
        out,
        OofAudit {
            fold_of: fold_of.to_vec(),
            fold_train_rows,
            predicted_by,
        },
    ))
}

fn meta_input<T: Real>(channels: &[Vec<T>], embedding: &Matrix<T>) -> Matrix<T> {
    let n = embedding.rows();
    let width = channels.len() + embedding.cols();
    let mut data = Vec::with_capacity(n * width);
    for r in 0..n {
        data.extend(channels.iter().map(|c| c[r]));
        data.extend_from_slice(embedding.row(r));
    }
    Matrix::from_vec(n, width, data).expect("consistent meta width")
}

fn average<T: Real>(channels: &[T]) -> T {
    channels.iter().copied().sum::<T>() / T::of_usize(channels.len())
}

/// Log10 funding estimate floored at $1.
fn floor_log<T: Real>(v: T) -> T {
    v.max(T::zero())
}

pub fn fit_pipeline_with_diagnostics<T: Real>(
    train: &Dataset,
    config: &PipelineConfig,
) -> Result<(FittedPipeline<T>, FitDiagnostics<T>)> {
    config.validate()?;
    train.check_trainable()?;
    if let Some(l) = train.labels().iter().find(|l| !(l.funding > 0.0)) {
        return Err(Error::Fit(format!("funding labels must be positive, found {}", l.funding)));
    }
    let provider = embedding_provider(&config.embedding_provider, config.embedding_dim)?;
    let encoder = EncoderState::<T>::fit(train, provider.as_ref())?;
    let fm = encode_dataset(train, &encoder, provider.as_ref())?;
    if fm.tabular.cols() == 0 {
        return Err(Error::Fit("no tabular features to train the base learners on".into()));
    }
    let y: Vec<T> = train.labels().iter().map(|l| T::of(l.funding.log10())).collect();
    let success = train.success();

    let fold_of = fold_assignment(train.len(), config.oof_folds, config.seed)?;
    let (channels, audit) = oof_predictions(&fm.tabular, &y, &fold_of, config)?;

    let meta = match config.meta_mode {
        MetaMode::Linear => MetaModel::Linear {
            model: LinearModel::fit(&meta_input(&channels, &fm.embedding), &y, config.meta_ridge_lambda)?,
        },
        MetaMode::Average => MetaModel::Average,
    };
    let oof_estimate: Vec<T> = match &meta {
        MetaModel::Linear { model } => model.predict(&meta_input(&channels, &fm.embedding))?,
        MetaModel::Average => (0..y.len())
            .map(|i| average(&channels.iter().map(|c| c[i]).collect::<Vec<_>>()))
            .collect(),
    };
    let calib_input: Vec<T> = oof_estimate.iter().map(|&v| floor_log(v)).collect();
    let calibrator = LogisticModel::fit(&calib_input, &success, config.logistic_ridge_lambda)?;
    if !(calibrator.coefficients()[0] > T::zero()) {
        return Err(Error::Fit(
            "calibrator slope is not positive: success does not increase with estimated funding".into(),
        ));
    }

    let (gbt, rf) = rayon::join(
        || {
            config
                .use_gbt
                .then(|| GradientBoostedTrees::fit(&fm.tabular, &y, &config.gbt_params(0)))
                .transpose()
        },
        || {
            config
                .use_rf
                .then(|| RandomForest::fit(&fm.tabular, &y, &config.rf_params(0)))
                .transpose()
        },
    );
    let pipeline = FittedPipeline {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        config: config.clone(),
        encoder,
        gbt: gbt?,
        rf: rf?,
        meta,
        calibrator,
        threshold: config.threshold,
        fingerprint: TrainingFingerprint {
            data_hash: train.fingerprint(),
            n_records: train.len(),
            seed: config.seed,
        },
    };
    Ok((
        pipeline,
        FitDiagnostics {
            audit,
            oof_channels: channels,
            oof_estimate,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_funding_usd: f64,
    pub success_prob: f64,
    pub predicted_success: bool,
    pub funding_class: FundingClass,
}

impl<T: Real> FittedPipeline<T> {
    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        embedding_provider(&self.encoder.embedding_provider_id, self.encoder.embedding_dim)
    }

    /// Meta-model input width.
    pub fn meta_width(&self) -> usize {
        usize::from(self.gbt.is_some()) + usize::from(self.rf.is_some()) + self.encoder.embedding_width()
    }

    /// Base predictions in meta channel order.
    pub fn base_predictions(&self, tabular: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(2);
        if let Some(g) = &self.gbt {
            out.push(g.predict_row(tabular));
        }
        if let Some(r) = &self.rf {
            out.push(r.predict_row(tabular));
        }
        out
    }

    /// Meta-model output (log10 dollars) from encoded rows.
    pub fn meta_output(&self, tabular: &[T], embedding: &[T]) -> T {
        let base = self.base_predictions(tabular);
        match &self.meta {
            MetaModel::Linear { model } => {
                let mut row = base;
                row.extend_from_slice(embedding);
                model.predict_row(&row)
            }
            MetaModel::Average => average(&base),
        }
    }

    /// Prediction from a meta-model output in log10 dollars.
    pub fn predict_from_log(&self, id: &str, log_funding: T) -> Result<Prediction> {
        let log_funding = floor_log(log_funding);
        let funding = 10f64.powf(log_funding.as_f64()).max(1.0);
        let p = self.calibrator.predict_scalar(log_funding)?.as_f64();
        Ok(Prediction {
            id: id.to_string(),
            predicted_funding_usd: funding,
            success_prob: p,
            predicted_success: p >= self.threshold,
            funding_class: funding_class(funding)?.class,
        })
    }

    pub fn predict_record(&self, record: &FounderRecord, provider: &dyn EmbeddingProvider) -> Result<Prediction> {
        let (tab, emb) = self.encoder.encode_record(record, provider)?;
        self.predict_from_log(&record.id, self.meta_output(&tab, &emb))
    }

    /// One result per record; a record that fails to encode does not stop the batch.
    pub fn predict(&self, records: &[FounderRecord]) -> Result<Vec<Result<Prediction>>> {
        let provider = self.embedding_provider()?;
        Ok(records
            .par_iter()
            .map(|r| self.predict_record(r, provider.as_ref()))
            .collect())
    }

    /// Predictions for a whole dataset, failing on the first bad record.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        if dataset.schema().hash() != self.encoder.schema_hash {
            return Err(Error::Fingerprint {
                expected: self.encoder.schema_hash.clone(),
                found: dataset.schema().hash(),
            });
        }
        self.predict(dataset.records())?.into_iter().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: FittedPipeline<T> = serde_json::from_str(text)?;
        if p.format != ARTIFACT_FORMAT || p.version != ARTIFACT_VERSION {
            return Err(Error::State(format!(
                "unsupported artifact {} v{} (expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION})",
                p.format, p.version
            )));
        }
        if p.encoder.schema.hash() != p.encoder.schema_hash {
            return Err(Error::Fingerprint {
                expected: p.encoder.schema_hash.clone(),
                found: p.encoder.schema.hash(),
            });
        }
        Ok(p)
    }

    /// SHA-256 of the serialized artifact.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().expect("artifact serializes")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Which amount places a record in a funding class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucketing {
    #[default]
    Predicted,
    Actual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub n: usize,
    pub successes: usize,
    /// Empirical success fraction; absent for an empty class.
    pub success_probability: Option<f64>,
}

/// Empirical success rate per funding class.
pub fn class_success_table<T: Real>(
    pipeline: &FittedPipeline<T>,
    dataset: &Dataset,
    bucketing: Bucketing,
) -> Result<BTreeMap<FundingClass, ClassRow>> {
    let classes: Vec<FundingClass> = match bucketing {
        Bucketing::Predicted => pipeline.predict_dataset(dataset)?.iter().map(|p| p.funding_class).collect(),
        Bucketing::Actual => dataset
            .labels()
            .iter()
            .map(|l| funding_class(l.funding).map(|c| c.class))
            .collect::<Result<_>>()?,
    };
    Ok(tabulate_classes(&classes, &dataset.success()))
}

pub fn tabulate_classes(classes: &[FundingClass], success: &[bool]) -> BTreeMap<FundingClass, ClassRow> {
    let mut counts = [(0usize, 0usize); 5];
    for (c, &s) in classes.iter().zip(success) {
        counts[c.index()].0 += 1;
        counts[c.index()].1 += usize::from(s);
    }
    FundingClass::ALL
        .into_iter()
        .map(|c| {
            let (n, k) = counts[c.index()];
            let row = ClassRow {
                n,
                successes: k,
                success_probability: (n > 0).then(|| k as f64 / n as f64),
            };
            (c, row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_cover_every_row_once() {
        let f = fold_assignment(23, 5, 1).unwrap();
        for k in 0..5 {
            let c = f.iter().filter(|&&x| x == k).count();
            assert!(c == 4 || c == 5);
        }
        assert!(fold_assignment(3, 5, 1).is_err());
        assert!(fold_assignment(10, 1, 1).is_err());
    }

    #[test]
    fn empty_classes_have_no_probability() {
        let t = tabulate_classes(&[FundingClass::UpTo10M, FundingClass::UpTo10M], &[true, false]);
        assert_eq!(t[&FundingClass::UpTo10M].success_probability, Some(0.5));
        assert_eq!(t[&FundingClass::Over1B].n, 0);
        assert!(t[&FundingClass::Over1B].success_probability.is_none());
    }
}
