use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::Importance;
use crate::pipeline::{fit_pipeline, FittedPipeline, MetaModel, PipelineConfig};
use crate::rng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub feature: String,
    pub share: f64,
}

/// Feature shares in descending order (ties broken by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    fn from_map(mass: BTreeMap<String, f64>) -> Result<Self> {
        let total: f64 = mass.values().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::State("sensitivity mass is zero or not finite".into()));
        }
        let mut rows: Vec<SensitivityRow> = mass
            .into_iter()
            .map(|(feature, m)| SensitivityRow { feature, share: m / total })
            .collect();
        rows.sort_by(|a, b| b.share.total_cmp(&a.share).then_with(|| a.feature.cmp(&b.feature)));
        Ok(SensitivityTable { rows })
    }

    pub fn ranking(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.feature.as_str()).collect()
    }

    pub fn share(&self, feature: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.feature == feature).map(|r| r.share)
    }

    pub fn top(&self, k: usize) -> &[SensitivityRow] {
        &self.rows[..k.min(self.rows.len())]
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.share).sum()
    }

    /// `feature,share` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,share\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.feature, r.share));
        }
        out
    }
}

/// Per-feature shares of a fitted pipeline.
///
/// Each meta channel gets `|coefficient| × std` of its training input
/// (equal weights across base channels when the meta-model is bypassed).
/// Base-learner channel mass is spread over tabular features by the
/// learner's split-gain importance; embedding channel mass goes to the
/// textual feature the column was embedded from.
pub fn sensitivity<T: Real>(pipeline: &FittedPipeline<T>) -> Result<SensitivityTable> {
    let mut base: Vec<Vec<T>> = Vec::new();
    if let Some(g) = &pipeline.gbt {
        base.push(g.importance()?);
    }
    if let Some(r) = &pipeline.rf {
        base.push(r.importance()?);
    }
    if base.is_empty() {
        return Err(Error::State("pipeline has no fitted base learner".into()));
    }
    let channel_mass: Vec<f64> = match &pipeline.meta {
        MetaModel::Linear { model } => model
            .coefficients()
            .iter()
            .zip(model.column_std())
            .map(|(c, s)| (c.abs() * *s).as_f64())
            .collect(),
        MetaModel::Average => vec![1.0; base.len()],
    };
    if channel_mass.len() != pipeline.meta_width() && !matches!(pipeline.meta, MetaModel::Average) {
        return Err(Error::Shape {
            expected: pipeline.meta_width(),
            got: channel_mass.len(),
        });
    }

    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    let tabular = pipeline.encoder.tabular_names();
    for name in &tabular {
        mass.insert(name.clone(), 0.0);
    }
    for (imp, &m) in base.iter().zip(&channel_mass) {
        for (name, share) in tabular.iter().zip(imp) {
            *mass.get_mut(name).expect("tabular name") += m * share.as_f64();
        }
    }
    for (source, &m) in pipeline.encoder.embedding_sources().iter().zip(channel_mass.iter().skip(base.len())) {
        *mass.entry(source.clone()).or_insert(0.0) += m;
    }
    SensitivityTable::from_map(mass)
}

/// Kendall tau-b between two paired samples.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).map(|o| o as i64).unwrap_or(0);
            let dy = (y[i] - y[j]).partial_cmp(&0.0).map(|o| o as i64).unwrap_or(0);
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tie_x) * (concordant + discordant + tie_y)) as f64).sqrt();
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Kendall tau over the union of both tables' top-`k` features, comparing
/// their shares.
pub fn top_k_tau(a: &SensitivityTable, b: &SensitivityTable, k: usize) -> Result<f64> {
    let mut features: Vec<&str> = a.top(k).iter().chain(b.top(k)).map(|r| r.feature.as_str()).collect();
    features.sort_unstable();
    features.dedup();
    let xa: Vec<f64> = features.iter().map(|f| a.share(f).unwrap_or(0.0)).collect();
    let xb: Vec<f64> = features.iter().map(|f| b.share(f).unwrap_or(0.0)).collect();
    kendall_tau(&xa, &xb)
}

/// Features compared by the stability analysis.
pub const STABILITY_TOP_K: usize = 10;
/// Fraction of the training set kept by each resample.
pub const RESAMPLE_FRACTION: f64 = 0.7;
pub const MAX_OUTLIER_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub outlier_fraction: f64,
    pub repeat: usize,
    pub n_outliers: usize,
    pub table: SensitivityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub runs: Vec<StabilityRun>,
    /// Pairwise top-10 Kendall tau between runs.
    pub tau: Vec<Vec<f64>>,
    pub mean_tau: f64,
    /// Whether every run ranks the same feature first.
    pub top1_consistent: bool,
}

/// Training indices of one resample: `round(m · fraction)` records from the
/// top and bottom funding deciles and the rest from the middle, where
/// `m = round(0.7 · n)`. Draws depend on `(seed, repeat)` only.
pub fn outlier_resample(dataset: &Dataset, fraction: f64, seed: u64, repeat: usize) -> Result<Vec<usize>> {
    if !(0.0..=MAX_OUTLIER_FRACTION).contains(&fraction) {
        return Err(Error::Sample(format!("outlier fraction must lie in [0, {MAX_OUTLIER_FRACTION}], got {fraction}")));
    }
    let n = dataset.len();
    let funding = dataset.funding();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| funding[a].total_cmp(&funding[b]).then(a.cmp(&b)));
    let decile = n / 10;
    let mut outliers: Vec<usize> = order[..decile].iter().chain(&order[n - decile..]).copied().collect();
    let mut middle: Vec<usize> = order[decile..n - decile].to_vec();
    let m = (RESAMPLE_FRACTION * n as f64).round() as usize;
    let k = (fraction * m as f64).round() as usize;
    if k > outliers.len() || m - k > middle.len() {
        return Err(Error::Sample(format!(
            "cannot draw {k} outliers and {} others from {} and {} candidates",
            m - k,
            outliers.len(),
            middle.len()
        )));
    }
    let mut rng = rng::stream(rng::derive_seed_str(seed, "resample"), repeat as u64);
    outliers.sort_unstable();
    middle.sort_unstable();
    let mut picked: Vec<usize> = outliers.choose_multiple(&mut rng, k).copied().collect();
    picked.extend(middle.choose_multiple(&mut rng, m - k));
    picked.sort_unstable();
    Ok(picked)
}

/// Retrains on outlier-controlled resamples and compares the resulting
/// sensitivity rankings.
pub fn sensitivity_stability(
    config: &PipelineConfig,
    dataset: &Dataset,
    outlier_fractions: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if outlier_fractions.is_empty() || repeats == 0 {
        return Err(Error::Param("stability needs at least one fraction and one repeat".into()));
    }
    let plan: Vec<(f64, usize)> = outlier_fractions
        .iter()
        .flat_map(|&f| (0..repeats).map(move |r| (f, r)))
        .collect();
    let samples: Vec<Vec<usize>> = plan
        .iter()
        .map(|&(f, r)| outlier_resample(dataset, f, seed, r))
        .collect::<Result<_>>()?;
    let runs: Vec<StabilityRun> = plan
        .par_iter()
        .zip(samples)
        .map(|(&(fraction, repeat), idx)| {
            let n_outliers = (fraction * idx.len() as f64).round() as usize;
            let subset = dataset.subset(&idx);
            let pipeline: FittedPipeline<f64> = fit_pipeline(&subset, config)?;
            Ok(StabilityRun {
                outlier_fraction: fraction,
                repeat,
                n_outliers,
                table: sensitivity(&pipeline)?,
            })
        })
        .collect::<Result<_>>()?;
    let k = runs.len();
    let mut tau = vec![vec![1.0; k]; k];
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let t = top_k_tau(&runs[i].table, &runs[j].table, STABILITY_TOP_K)?;
            tau[i][j] = t;
            tau[j][i] = t;
            pairs.push(t);
        }
    }
    let mean_tau = if pairs.is_empty() { 1.0 } else { pairs.iter().sum::<f64>() / pairs.len() as f64 };
    let first = runs[0].table.ranking().first().map(|s| s.to_string());
    let top1_consistent = runs.iter().all(|r| r.table.ranking().first().map(|s| s.to_string()) == first);
    Ok(StabilityReport {
        runs,
        tau,
        mean_tau,
        top1_consistent,
    })
}

/// Dataset view with one continuous feature multiplied by `factor`.
pub fn rescale_feature(dataset: &Dataset, feature: &str, factor: f64) -> Result<Dataset> {
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(v) = r.values.get_mut(feature) {
                *v *= factor;
            }
            r
        })
        .collect();
    dataset.with_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_hand_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // One discordant pair of three.
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }
}
