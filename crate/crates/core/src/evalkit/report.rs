use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::FundingClass;
use crate::error::Result;
use crate::pipeline::ClassRow;

use super::ablation::AblationReport;
use super::metrics::{SubsetRow, SweepRow};
use super::sensitivity::SensitivityTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<SubsetRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablations: Vec<AblationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_table: Option<BTreeMap<FundingClass, ClassRow>>,
    /// Hash of the pipeline artifact (or configuration) evaluated.
    pub config_fingerprint: String,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "n/a".into())
}

impl EvaluationReport {
    pub fn new(rows: Vec<SubsetRow>, config_fingerprint: impl Into<String>) -> Self {
        EvaluationReport {
            rows,
            sweep: None,
            sensitivity: None,
            ablations: Vec::new(),
            class_table: None,
            config_fingerprint: config_fingerprint.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Aligned-column text for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.rows.is_empty() {
            let _ = writeln!(out, "{:<8} {:>6} {:>9} {:>9} {:>9} {:>7} {:>8}", "subset", "n", "baseline", "precision", "multiple", "recall", "mape%");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{:<8} {:>6} {:>9.4} {:>9} {:>9} {:>7} {:>8.2}",
                    r.subset,
                    r.n,
                    r.baseline_rate,
                    opt(r.precision, 4),
                    opt(r.precision_multiple, 2),
                    opt(r.recall, 3),
                    r.mape
                );
            }
        }
        if let Some(t) = &self.class_table {
            let _ = writeln!(out, "\n{:<10} {:>6} {:>9} {:>8}", "class", "n", "successes", "p");
            for (c, r) in t {
                let _ = writeln!(out, "{:<10} {:>6} {:>9} {:>8}", c.label(), r.n, r.successes, opt(r.success_probability, 4));
            }
        }
        if let Some(sweep) = &self.sweep {
            let _ = writeln!(out, "\n{:>9} {:>9} {:>9} {:>7} {:>9}", "threshold", "precision", "multiple", "recall", "positives");
            for r in sweep {
                let _ = writeln!(
                    out,
                    "{:>9.2} {:>9} {:>9} {:>7} {:>9}",
                    r.threshold,
                    opt(r.precision, 4),
                    opt(r.precision_multiple, 2),
                    opt(r.recall, 3),
                    r.n_predicted_positive
                );
            }
        }
        if let Some(s) = &self.sensitivity {
            let _ = writeln!(out, "\n{:<32} {:>8}", "feature", "share");
            for r in &s.rows {
                let _ = writeln!(out, "{:<32} {:>8.4}", r.feature, r.share);
            }
        }
        for a in &self.ablations {
            let _ = writeln!(out, "\nablation: {}", a.suite);
            let _ = writeln!(out, "{:<24} {:>9} {:>7} {:>8} {:>9}", "variant", "multiple", "recall", "mape%", "delta");
            for r in std::iter::once(&a.full).chain(&a.rows) {
                let _ = writeln!(
                    out,
                    "{:<24} {:>9} {:>7} {:>8.2} {:>9}",
                    r.variant,
                    opt(r.precision_multiple, 2),
                    opt(r.recall, 3),
                    r.mape,
                    opt(r.delta_precision_multiple, 2)
                );
            }
        }
        let _ = writeln!(out, "\nfingerprint {}", self.config_fingerprint);
        out
    }
}

/// Plot-ready `threshold,precision` lines; undefined precision is left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,precision\n");
    for r in rows {
        let p = r.precision.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{}", r.threshold, p);
    }
    out
}
