use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::FittedPipeline;
use crate::scalar::Real;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape { expected: a, got: b });
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_len(predicted.len(), actual.len())?;
    if actual.is_empty() {
        return Err(Error::Metric("MAPE of an empty sample".into()));
    }
    if let Some(a) = actual.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Metric(format!("MAPE needs positive actual values, found {a}")));
    }
    let total: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs() / a).sum();
    Ok(100.0 * total / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// `None` when there are no actual positives.
    pub recall: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn precision_recall(predicted: &[bool], actual: &[bool]) -> Result<PrecisionRecall> {
    check_len(predicted.len(), actual.len())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(PrecisionRecall {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
    })
}

pub fn precision_multiple(precision: f64, baseline_rate: f64) -> Result<f64> {
    if !(baseline_rate > 0.0) {
        return Err(Error::Metric(format!("baseline rate must be positive, got {baseline_rate}")));
    }
    Ok(precision / baseline_rate)
}

/// Metrics of one evaluation subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub subset: String,
    pub n: usize,
    pub baseline_rate: f64,
    pub precision: Option<f64>,
    pub precision_multiple: Option<f64>,
    pub recall: Option<f64>,
    pub mape: f64,
}

pub fn evaluate_subset<T: Real>(pipeline: &FittedPipeline<T>, subset: &str, dataset: &Dataset) -> Result<SubsetRow> {
    let preds = pipeline.predict_dataset(dataset)?;
    let predicted: Vec<bool> = preds.iter().map(|p| p.predicted_success).collect();
    let funding: Vec<f64> = preds.iter().map(|p| p.predicted_funding_usd).collect();
    let actual = dataset.success();
    let pr = precision_recall(&predicted, &actual)?;
    let baseline = dataset.success_rate();
    Ok(SubsetRow {
        subset: subset.to_string(),
        n: dataset.len(),
        baseline_rate: baseline,
        precision: pr.precision,
        precision_multiple: match pr.precision {
            Some(p) if baseline > 0.0 => Some(precision_multiple(p, baseline)?),
            _ => None,
        },
        recall: pr.recall,
        mape: mape(&funding, &dataset.funding())?,
    })
}

/// One row per evaluation subset, named `eval1`, `eval2`, ...
pub fn evaluate<T: Real>(pipeline: &FittedPipeline<T>, subsets: &[Dataset]) -> Result<Vec<SubsetRow>> {
    subsets
        .iter()
        .enumerate()
        .map(|(i, d)| evaluate_subset(pipeline, &format!("eval{}", i + 1), d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub precision_multiple: Option<f64>,
    pub recall: Option<f64>,
    pub n_predicted_positive: usize,
}

/// 0.50, 0.55, ..., 0.95.
pub fn default_grid() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Sweep from precomputed success probabilities.
pub fn sweep_probabilities(probs: &[f64], actual: &[bool], grid: &[f64]) -> Result<Vec<SweepRow>> {
    check_len(probs.len(), actual.len())?;
    if grid.is_empty() {
        return Err(Error::Param("threshold grid is empty".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Param(format!("thresholds must lie in (0, 1), got {t}")));
    }
    let baseline = actual.iter().filter(|a| **a).count() as f64 / actual.len().max(1) as f64;
    grid.iter()
        .map(|&t| {
            let predicted: Vec<bool> = probs.iter().map(|p| *p >= t).collect();
            let pr = precision_recall(&predicted, actual)?;
            Ok(SweepRow {
                threshold: t,
                precision: pr.precision,
                precision_multiple: match pr.precision {
                    Some(p) if baseline > 0.0 => Some(p / baseline),
                    _ => None,
                },
                recall: pr.recall,
                n_predicted_positive: pr.tp + pr.fp,
            })
        })
        .collect()
}

pub fn sweep_threshold<T: Real>(pipeline: &FittedPipeline<T>, dataset: &Dataset, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let probs: Vec<f64> = pipeline.predict_dataset(dataset)?.iter().map(|p| p.success_prob).collect();
    sweep_probabilities(&probs, &dataset.success(), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(mape(&[100.0], &[100.0]).unwrap(), 0.0);
        assert!((mape(&[110.0, 90.0], &[100.0, 100.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Metric(_))));
        assert!(matches!(mape(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));

        let none = precision_recall(&[false; 4], &[true, false, true, false]).unwrap();
        assert_eq!((none.precision, none.recall), (None, Some(0.0)));
        let mut p = vec![true; 4];
        let mut a = vec![true, true, true, false];
        p.extend(vec![false; 7]);
        a.extend(vec![true; 7]);
        let pr = precision_recall(&p, &a).unwrap();
        assert_eq!((pr.tp, pr.fp, pr.fn_), (3, 1, 7));
        assert_eq!(pr.precision, Some(0.75));
        assert!((pr.recall.unwrap() - 0.3).abs() < 1e-15);

        assert_eq!(precision_multiple(0.5, 0.05).unwrap(), 10.0);
        assert!((precision_multiple(0.8216, 0.079).unwrap() - 10.4).abs() < 0.005);
        assert!(precision_multiple(0.5, 0.0).is_err());
    }

    #[test]
    fn sweep_above_max_probability_is_undefined() {
        let rows = sweep_probabilities(&[0.1, 0.2, 0.3], &[true, false, true], &default_grid()).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.n_predicted_positive == 0 && r.precision.is_none()));
        assert!(sweep_probabilities(&[0.1], &[true], &[1.0]).is_err());
    }
}
