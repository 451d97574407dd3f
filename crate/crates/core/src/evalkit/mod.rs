//! Evaluation: funding error, precision against the random baseline,
//! threshold sweeps, feature sensitivity with a stability check, and
//! ablation suites.

mod ablation;
mod metrics;
mod report;
mod sensitivity;

pub use ablation::{
    ablation_against, eval_fingerprint, pooled_row, run_ablation, run_variant, suite_variants, AblationReport,
    AblationRow, AblationSuite, Variant,
};
pub use metrics::{
    default_grid, evaluate, evaluate_subset, mape, precision_multiple, precision_recall, sweep_probabilities,
    sweep_threshold, PrecisionRecall, SubsetRow, SweepRow,
};
pub use report::{sweep_csv, EvaluationReport};
pub use sensitivity::{
    kendall_tau, outlier_resample, rescale_feature, sensitivity, sensitivity_stability, top_k_tau, SensitivityRow,
    SensitivityTable, StabilityReport, StabilityRun, MAX_OUTLIER_FRACTION, RESAMPLE_FRACTION, STABILITY_TOP_K,
};
