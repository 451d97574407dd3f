use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{split_dataset, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::pipeline::{fit_pipeline, FittedPipeline, MetaMode, PipelineConfig};
use crate::rng;
use crate::schema::{Branch, FeatureSchema, Origin};

use super::metrics::{mape, precision_recall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    LlmFeatures,
    Embeddings,
    ModelComponents,
    FeatureCategories,
}

impl AblationSuite {
    pub const ALL: [AblationSuite; 4] = [
        AblationSuite::LlmFeatures,
        AblationSuite::Embeddings,
        AblationSuite::ModelComponents,
        AblationSuite::FeatureCategories,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationSuite::LlmFeatures => "llm_features",
            AblationSuite::Embeddings => "embeddings",
            AblationSuite::ModelComponents => "model_components",
            AblationSuite::FeatureCategories => "feature_categories",
        }
    }
}

impl fmt::Display for AblationSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationSuite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown ablation suite {s:?}")))
    }
}

/// One configuration compared against the full pipeline.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub schema: Arc<FeatureSchema>,
    pub config: PipelineConfig,
}

fn variant(name: &str, schema: FeatureSchema, config: PipelineConfig) -> Variant {
    Variant {
        name: name.to_string(),
        schema: Arc::new(schema),
        config,
    }
}

/// Variants of a suite. The embeddings suite includes the default mock
/// provider so that both providers appear as rows.
pub fn suite_variants(suite: AblationSuite, schema: &FeatureSchema, config: &PipelineConfig) -> Vec<Variant> {
    let same = || schema.clone();
    match suite {
        AblationSuite::LlmFeatures => vec![variant("without_llm_features", schema.without(&[], &[Origin::LlmDerived]), config.clone())],
        AblationSuite::Embeddings => ["mock", "none"]
            .into_iter()
            .map(|p| {
                let config = PipelineConfig {
                    embedding_provider: p.to_string(),
                    ..config.clone()
                };
                variant(&format!("embedding_{p}"), same(), config)
            })
            .collect(),
        AblationSuite::ModelComponents => vec![
            variant("without_gbt", same(), PipelineConfig { use_gbt: false, ..config.clone() }),
            variant("without_rf", same(), PipelineConfig { use_rf: false, ..config.clone() }),
            variant("meta_bypass", same(), PipelineConfig { meta_mode: MetaMode::Average, ..config.clone() }),
        ],
        AblationSuite::FeatureCategories => Branch::ALL
            .into_iter()
            .map(|b| variant(&format!("without_{}", b.name()), schema.without(&[b], &[]), config.clone()))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub n_features: usize,
    /// Pooled over all evaluation subsets.
    pub precision: Option<f64>,
    pub precision_multiple: Option<f64>,
    pub recall: Option<f64>,
    pub mape: f64,
    pub delta_precision_multiple: Option<f64>,
    pub delta_recall: Option<f64>,
    /// Digest of the evaluation records (ids and labels) this row used.
    pub eval_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: AblationSuite,
    pub full: AblationRow,
    pub rows: Vec<AblationRow>,
}

/// Digest of evaluation ids and labels, independent of the feature schema.
pub fn eval_fingerprint(evals: &[Dataset]) -> String {
    let mut h = Sha256::new();
    for (i, d) in evals.iter().enumerate() {
        h.update((i as u64).to_le_bytes());
        for (r, l) in d.records().iter().zip(d.labels()) {
            h.update(r.id.as_bytes());
            h.update(l.funding.to_le_bytes());
            h.update([u8::from(l.success)]);
        }
    }
    hex::encode(h.finalize())
}

/// Pooled metrics of a fitted pipeline over several evaluation subsets.
pub fn pooled_row(pipeline: &FittedPipeline<f64>, name: &str, evals: &[Dataset]) -> Result<AblationRow> {
    let (mut predicted, mut actual, mut pf, mut af) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for d in evals {
        for p in pipeline.predict_dataset(d)? {
            predicted.push(p.predicted_success);
            pf.push(p.predicted_funding_usd);
        }
        actual.extend(d.success());
        af.extend(d.funding());
    }
    let pr = precision_recall(&predicted, &actual)?;
    let baseline = actual.iter().filter(|a| **a).count() as f64 / actual.len().max(1) as f64;
    Ok(AblationRow {
        variant: name.to_string(),
        n_features: pipeline.encoder.schema.len(),
        precision: pr.precision,
        precision_multiple: pr.precision.filter(|_| baseline > 0.0).map(|p| p / baseline),
        recall: pr.recall,
        mape: mape(&pf, &af)?,
        delta_precision_multiple: None,
        delta_recall: None,
        eval_fingerprint: eval_fingerprint(evals),
    })
}

fn check_variant(v: &Variant) -> Result<()> {
    if v.schema.is_empty() {
        return Err(Error::Ablation(format!("variant {} leaves no features", v.name)));
    }
    if !v.config.use_gbt && !v.config.use_rf {
        return Err(Error::Ablation(format!("variant {} leaves no base learner", v.name)));
    }
    let tabular = v.schema.features.iter().any(|f| f.branch != Branch::Textual);
    if !tabular {
        return Err(Error::Ablation(format!("variant {} leaves no tabular feature for the base learners", v.name)));
    }
    Ok(())
}

/// Fits a variant on `train` (projected onto its schema, with a seed derived
/// from the variant name) and scores it on `evals`.
pub fn run_variant(v: &Variant, train: &Dataset, evals: &[Dataset]) -> Result<AblationRow> {
    check_variant(v)?;
    let config = PipelineConfig {
        seed: rng::derive_seed_str(v.config.seed, &v.name),
        ..v.config.clone()
    };
    let train = train.with_schema(Arc::clone(&v.schema))?;
    let evals: Vec<Dataset> = evals
        .iter()
        .map(|d| d.with_schema(Arc::clone(&v.schema)))
        .collect::<Result<_>>()?;
    let pipeline = fit_pipeline(&train, &config)?;
    pooled_row(&pipeline, &v.name, &evals)
}

/// Deltas against the full pipeline. A variant with no predicted positives
/// has undefined precision; its multiple counts as 0 (no lift) in the delta.
fn with_deltas(mut row: AblationRow, full: &AblationRow) -> AblationRow {
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    let lift = |r: &AblationRow| match (r.precision_multiple, r.precision) {
        (Some(m), _) => Some(m),
        (None, None) if r.recall.is_some() => Some(0.0),
        _ => None,
    };
    row.delta_precision_multiple = diff(lift(&row), lift(full));
    row.delta_recall = diff(row.recall, full.recall);
    row
}

/// Full pipeline plus every variant of `suite` on one shared split.
pub fn run_ablation(suite: AblationSuite, dataset: &Dataset, split: &SplitSpec, config: &PipelineConfig) -> Result<AblationReport> {
    let variants = suite_variants(suite, dataset.schema(), config);
    for v in &variants {
        check_variant(v)?;
    }
    let (train, evals) = split_dataset(dataset, split)?;
    let full_pipeline = fit_pipeline(&train, config)?;
    ablation_against(suite, &full_pipeline, &train, &evals, config)
}

/// Ablation against an already fitted full pipeline trained on `train`.
pub fn ablation_against(
    suite: AblationSuite,
    full_pipeline: &FittedPipeline<f64>,
    train: &Dataset,
    evals: &[Dataset],
    config: &PipelineConfig,
) -> Result<AblationReport> {
    let variants = suite_variants(suite, train.schema(), config);
    for v in &variants {
        check_variant(v)?;
    }
    let full = pooled_row(full_pipeline, "full", evals)?;
    let rows: Vec<AblationRow> = variants
        .par_iter()
        .map(|v| run_variant(v, train, evals))
        .collect::<Result<_>>()?;
    let full = with_deltas(full.clone(), &full);
    let rows = rows.into_iter().map(|r| with_deltas(r, &full)).collect();
    Ok(AblationReport { suite, full, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_shapes() {
        let s = FeatureSchema::default();
        let c = PipelineConfig::default();
        assert_eq!(suite_variants(AblationSuite::Embeddings, &s, &c).len(), 2);
        assert_eq!(suite_variants(AblationSuite::ModelComponents, &s, &c).len(), 3);
        assert_eq!(suite_variants(AblationSuite::FeatureCategories, &s, &c).len(), 4);
        let llm = &suite_variants(AblationSuite::LlmFeatures, &s, &c)[0];
        assert_eq!(llm.schema.len(), 38);
        assert_eq!("model_components".parse::<AblationSuite>().unwrap(), AblationSuite::ModelComponents);
    }

    #[test]
    fn dropping_both_models_is_an_ablation_error() {
        let s = FeatureSchema::default();
        let v = variant(
            "no_models",
            s,
            PipelineConfig {
                use_gbt: false,
                use_rf: false,
                ..Default::default()
            },
        );
        let empty = Dataset::new(Arc::clone(&v.schema), vec![], vec![]).unwrap();
        assert!(matches!(run_variant(&v, &empty, &[]), Err(Error::Ablation(_))));
        let none = variant("empty", FeatureSchema { features: vec![] }, PipelineConfig::default());
        assert!(matches!(run_variant(&none, &empty, &[]), Err(Error::Ablation(_))));
    }
}
