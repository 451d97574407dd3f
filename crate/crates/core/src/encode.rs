//! Four-branch feature encoding.
//!
//! Column layout of the tabular block is categorical codes, then z-scored
//! continuous values, then booleans, each in schema order. Textual features
//! are embedded into a separate block of `embedding_dim` columns per feature.
//!
//! Missing or unparsed values are imputed: categorical features take their
//! declared "unknown" level if any, else the training mode; continuous
//! features take z = 0 (the training mean); booleans take 0.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, FounderRecord};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::{mean, population_std, Real};
use crate::schema::{Branch, FeatureDecl, FeatureSchema, EDUCATION_LEVELS};

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// Education label to its ordinal code.
pub fn encode_education(label: &str) -> Result<i64> {
    EDUCATION_LEVELS
        .iter()
        .position(|l| *l == label.trim())
        .map(|i| i as i64)
        .ok_or_else(|| Error::UnknownCategory {
            feature: "education_level".into(),
            label: label.to_string(),
        })
}

/// Declared label (or integer spelling of a declared code) to its code.
pub fn encode_categorical(feature: &FeatureDecl, label: &str) -> Result<i64> {
    if feature.branch != Branch::Categorical {
        return Err(Error::Encode(format!("{} is not categorical", feature.name)));
    }
    feature.code_for(label).ok_or_else(|| Error::UnknownCategory {
        feature: feature.name.clone(),
        label: label.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: T,
    pub std: T,
}

/// Mean and population standard deviation of the training values.
pub fn fit_standardizer<T: Real>(values: &[T]) -> Result<Standardizer<T>> {
    if values.is_empty() {
        return Err(Error::Fit("cannot fit a standardizer on no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("standardizer inputs must be finite".into()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(Standardizer {
            mean: values[0],
            std: T::zero(),
        });
    }
    Ok(Standardizer {
        mean: mean(values).expect("non-empty"),
        std: population_std(values).expect("non-empty"),
    })
}

impl<T: Real> Standardizer<T> {
    /// `(value − mean) / std`, or 0 for a constant training column.
    pub fn apply(&self, value: T) -> Result<T> {
        if !value.is_finite() {
            return Err(Error::Encode(format!("cannot standardize non-finite value {value}")));
        }
        if self.std == T::zero() {
            return Ok(T::zero());
        }
        Ok((value - self.mean) / self.std)
    }
}

pub fn apply_standardizer<T: Real>(state: &Standardizer<T>, value: T) -> Result<T> {
    state.apply(value)
}

/// Text to fixed-width vector.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Hashed bag-of-tokens projection: every lowercase alphanumeric token adds a
/// pseudo-random ±1 vector keyed by its hash; the sum is unit-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        MockEmbedder { dim }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder::new(DEFAULT_EMBEDDING_DIM)
    }
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl EmbeddingProvider for MockEmbedder {
    fn id(&self) -> &str {
        "mock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for token in tokens(text) {
            let h = rng::fnv1a(token.as_bytes());
            for (j, slot) in v.iter_mut().enumerate() {
                let bit = rng::derive_seed(h, j as u64) & 1;
                *slot += if bit == 1 { 1.0 } else { -1.0 };
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(v)
    }
}

/// Produces zero-width embeddings, removing the text branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoEmbedder;

impl EmbeddingProvider for NoEmbedder {
    fn id(&self) -> &str {
        "none"
    }

    fn dim(&self) -> usize {
        0
    }

    fn embed(&self, _text: &str) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// Adapter slot for a hosted embedding service. Reads the endpoint from
/// `RARECAST_EMBED_ENDPOINT` and the key from `RARECAST_EMBED_API_KEY`; this
/// build ships no HTTP client, so every call fails with `Error::Embed`.
#[derive(Debug, Clone)]
pub struct ExternalEmbedder {
    dim: usize,
    endpoint: Option<String>,
}

pub const EMBED_ENDPOINT_VAR: &str = "RARECAST_EMBED_ENDPOINT";
pub const EMBED_KEY_VAR: &str = "RARECAST_EMBED_API_KEY";

impl ExternalEmbedder {
    pub fn from_env(dim: usize) -> Self {
        ExternalEmbedder {
            dim,
            endpoint: std::env::var(EMBED_ENDPOINT_VAR).ok(),
        }
    }
}

impl EmbeddingProvider for ExternalEmbedder {
    fn id(&self) -> &str {
        "external"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _text: &str) -> Result<Vec<f64>> {
        match &self.endpoint {
            None => Err(Error::Embed(format!("{EMBED_ENDPOINT_VAR} is not set"))),
            Some(_) => Err(Error::Embed("external embedding transport is not available in this build".into())),
        }
    }
}

/// Provider by identifier: `mock`, `none` or `external`.
pub fn embedding_provider(id: &str, dim: usize) -> Result<Box<dyn EmbeddingProvider>> {
    match id {
        "mock" => Ok(Box::new(MockEmbedder::new(dim))),
        "none" => Ok(Box::new(NoEmbedder)),
        "external" => Ok(Box::new(ExternalEmbedder::from_env(dim))),
        other => Err(Error::Param(format!("unknown embedding provider {other:?}"))),
    }
}

pub fn embed_text(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>> {
    let v = provider.embed(text)?;
    if v.len() != provider.dim() {
        return Err(Error::Embed(format!(
            "provider {} returned {} values, expected {}",
            provider.id(),
            v.len(),
            provider.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Embed(format!("provider {} returned non-finite values", provider.id())));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub name: String,
    /// Code used when the value is missing.
    pub impute: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousColumn<T> {
    pub name: String,
    pub standardizer: Standardizer<T>,
}

/// Encoding statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState<T> {
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub categorical: Vec<CategoricalColumn>,
    pub continuous: Vec<ContinuousColumn<T>>,
    pub boolean: Vec<String>,
    pub textual: Vec<String>,
    pub embedding_dim: usize,
    pub embedding_provider_id: String,
}

impl<T: Real> EncoderState<T> {
    pub fn fit(train: &Dataset, provider: &dyn EmbeddingProvider) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Fit("cannot fit an encoder on an empty dataset".into()));
        }
        let schema = train.schema().clone();
        let records = train.records();
        let mut categorical = Vec::new();
        let mut continuous = Vec::new();
        let mut boolean = Vec::new();
        let mut textual = Vec::new();
        for decl in &schema.features {
            match decl.branch {
                Branch::Categorical => {
                    let impute = match decl.unknown_code() {
                        Some(c) => c,
                        None => training_mode(decl, records),
                    };
                    categorical.push(CategoricalColumn {
                        name: decl.name.clone(),
                        impute,
                    });
                }
                Branch::Continuous => {
                    let values: Vec<T> = records
                        .iter()
                        .filter_map(|r| r.values.get(&decl.name))
                        .map(|&v| T::of(v))
                        .collect();
                    let standardizer = if values.is_empty() {
                        Standardizer {
                            mean: T::zero(),
                            std: T::zero(),
                        }
                    } else {
                        fit_standardizer(&values).map_err(|e| Error::Fit(format!("{}: {e}", decl.name)))?
                    };
                    continuous.push(ContinuousColumn {
                        name: decl.name.clone(),
                        standardizer,
                    });
                }
                Branch::Boolean => boolean.push(decl.name.clone()),
                Branch::Textual => textual.push(decl.name.clone()),
            }
        }
        Ok(EncoderState {
            schema_hash: schema.hash(),
            schema,
            categorical,
            continuous,
            boolean,
            textual,
            embedding_dim: provider.dim(),
            embedding_provider_id: provider.id().to_string(),
        })
    }

    pub fn tabular_width(&self) -> usize {
        self.categorical.len() + self.continuous.len() + self.boolean.len()
    }

    pub fn embedding_width(&self) -> usize {
        self.textual.len() * self.embedding_dim
    }

    pub fn tabular_names(&self) -> Vec<String> {
        self.categorical
            .iter()
            .map(|c| c.name.clone())
            .chain(self.continuous.iter().map(|c| c.name.clone()))
            .chain(self.boolean.iter().cloned())
            .collect()
    }

    /// Source textual feature of each embedding column.
    pub fn embedding_sources(&self) -> Vec<String> {
        self.textual
            .iter()
            .flat_map(|t| std::iter::repeat(t.clone()).take(self.embedding_dim))
            .collect()
    }

    pub fn embedding_names(&self) -> Vec<String> {
        self.textual
            .iter()
            .flat_map(|t| (0..self.embedding_dim).map(move |j| format!("{t}#{j}")))
            .collect()
    }

    /// SHA-256 over the serialized state.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("state serializes")))
    }

    fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        if self.textual.is_empty() {
            return Ok(());
        }
        if provider.id() != self.embedding_provider_id || provider.dim() != self.embedding_dim {
            return Err(Error::Embed(format!(
                "encoder was fitted with provider {} (dim {}), got {} (dim {})",
                self.embedding_provider_id,
                self.embedding_dim,
                provider.id(),
                provider.dim()
            )));
        }
        Ok(())
    }

    /// Tabular row and embedding row for one record.
    pub fn encode_record(&self, record: &FounderRecord, provider: &dyn EmbeddingProvider) -> Result<(Vec<T>, Vec<T>)> {
        self.check_provider(provider)?;
        let with_id = |e: Error| match e {
            Error::UnknownCategory { feature, label } => Error::UnknownCategory {
                feature,
                label: format!("{label} (record {})", record.id),
            },
            Error::Encode(m) => Error::Encode(format!("record {}: {m}", record.id)),
            Error::Embed(m) => Error::Embed(format!("record {}: {m}", record.id)),
            other => other,
        };
        let mut tab = Vec::with_capacity(self.tabular_width());
        for col in &self.categorical {
            let decl = self.schema.get(&col.name).expect("declared");
            let code = match record.values.get(&col.name) {
                Some(&v) if decl.is_declared_code(v) => v as i64,
                Some(&v) => {
                    return Err(with_id(Error::UnknownCategory {
                        feature: col.name.clone(),
                        label: format_value(v),
                    }))
                }
                None => record
                    .raw_text
                    .get(&col.name)
                    .and_then(|t| decl.code_for(t))
                    .unwrap_or(col.impute),
            };
            tab.push(T::of(code as f64));
        }
        for col in &self.continuous {
            let z = match record.values.get(&col.name) {
                Some(&v) => col
                    .standardizer
                    .apply(T::of(v))
                    .map_err(|e| with_id(Error::Encode(format!("{}: {e}", col.name))))?,
                None => T::zero(),
            };
            tab.push(z);
        }
        for name in &self.boolean {
            let decl = self.schema.get(name).expect("declared");
            let v = match record.values.get(name) {
                Some(&v) if v == 0.0 || v == 1.0 => v,
                Some(&v) => return Err(with_id(Error::Encode(format!("{name}: {v} is not boolean")))),
                None => record
                    .raw_text
                    .get(name)
                    .and_then(|t| decl.code_for(t))
                    .unwrap_or(0) as f64,
            };
            tab.push(T::of(v));
        }
        let mut emb = Vec::with_capacity(self.embedding_width());
        for name in &self.textual {
            let text = record.raw_text.get(name).map(String::as_str).unwrap_or("");
            let v = embed_text(text, provider).map_err(with_id)?;
            emb.extend(v.into_iter().map(T::of));
        }
        Ok((tab, emb))
    }
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

fn training_mode(decl: &FeatureDecl, records: &[FounderRecord]) -> i64 {
    let mut counts: BTreeMap<i64, usize> = decl.levels().iter().map(|l| (l.code, 0)).collect();
    for r in records {
        match r.values.get(&decl.name) {
            Some(&v) if decl.is_declared_code(v) => *counts.entry(v as i64).or_default() += 1,
            _ => {}
        }
    }
    // Highest count, lowest code on ties.
    counts
        .iter()
        .fold((0i64, 0usize), |best, (&code, &n)| if n > best.1 { (code, n) } else { best })
        .0
}

/// Encoded dataset: tabular block plus embedding block, rows aligned with records.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub ids: Vec<String>,
    pub tabular: Matrix<T>,
    pub embedding: Matrix<T>,
    pub tabular_names: Vec<String>,
    pub embedding_names: Vec<String>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }
}

pub fn encode_records<T: Real>(
    records: &[FounderRecord],
    state: &EncoderState<T>,
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureMatrix<T>> {
    state.check_provider(provider)?;
    let rows: Vec<(Vec<T>, Vec<T>)> = records
        .par_iter()
        .map(|r| state.encode_record(r, provider))
        .collect::<Result<_>>()?;
    let n = records.len();
    let (tw, ew) = (state.tabular_width(), state.embedding_width());
    let mut tab = Vec::with_capacity(n * tw);
    let mut emb = Vec::with_capacity(n * ew);
    for (t, e) in rows {
        tab.extend(t);
        emb.extend(e);
    }
    Ok(FeatureMatrix {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        tabular: Matrix::from_vec(n, tw, tab)?,
        embedding: Matrix::from_vec(n, ew, emb)?,
        tabular_names: state.tabular_names(),
        embedding_names: state.embedding_names(),
    })
}

pub fn encode_dataset<T: Real>(
    dataset: &Dataset,
    state: &EncoderState<T>,
    provider: &dyn EmbeddingProvider,
) -> Result<FeatureMatrix<T>> {
    if dataset.schema().hash() != state.schema_hash {
        return Err(Error::Fingerprint {
            expected: state.schema_hash.clone(),
            found: dataset.schema().hash(),
        });
    }
    encode_records(dataset.records(), state, provider)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn education_table() {
        for (label, code) in [
            ("Associate Degree or less", 0),
            ("Bachelor's Degree", 1),
            ("Master's Degree", 2),
            ("Doctoral Degree or more", 3),
        ] {
            assert_eq!(encode_education(label).unwrap(), code);
        }
        assert!(matches!(encode_education("Elementary"), Err(Error::UnknownCategory { .. })));
    }

    #[test]
    fn standardizer_examples() {
        let s = fit_standardizer(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 0.816496580927726).abs() < 1e-12);
        assert_eq!(s.apply(2.0).unwrap(), 0.0);
        assert!((s.apply(3.0).unwrap() - 1.224744871391589).abs() < 1e-12);
        let c = fit_standardizer(&[5.0f64, 5.0, 5.0]).unwrap();
        assert_eq!((c.mean, c.std), (5.0, 0.0));
        assert_eq!(c.apply(9.0).unwrap(), 0.0);
        assert!(fit_standardizer::<f64>(&[]).is_err());
        assert!(s.apply(f64::NAN).is_err());
    }

    #[test]
    fn mock_embedding_contract() {
        let m = MockEmbedder::default();
        let a = embed_text("Cancer diagnostics from blood", &m).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, embed_text("cancer DIAGNOSTICS, from blood", &m).unwrap());
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(embed_text("", &m).unwrap(), vec![0.0; 64]);
        assert!(embed_text("x", &NoEmbedder).unwrap().is_empty());
    }
}
