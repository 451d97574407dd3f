//! Stacked-ensemble rare-event prediction for founder outcomes.
//!
//! Profiles are enriched into structured features ([`enrich`]), encoded into
//! a tabular block and text embeddings ([`encode`]), and fed to boosted
//! trees and a random forest whose out-of-fold predictions train a ridge
//! meta-model of log10 funding ([`pipeline`]). A logistic calibrator turns
//! the funding estimate into a success probability. [`synth`] generates
//! planted-signal datasets and [`evalkit`] measures everything.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod classes;
pub mod data;
pub mod encode;
pub mod enrich;
pub mod error;
pub mod evalkit;
pub mod learners;
pub mod linalg;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod schema;
pub mod synth;

pub use error::{Error, Result};

pub type Pipeline = pipeline::FittedPipeline<f64>;
pub type Encoder = encode::EncoderState<f64>;
pub type Features = encode::FeatureMatrix<f64>;
pub type Gbt = learners::GradientBoostedTrees<f64>;
pub type Forest = learners::RandomForest<f64>;
pub type Linear = learners::LinearModel<f64>;
pub type Logistic = learners::LogisticModel<f64>;
pub type Tree = learners::RegressionTree<f64>;
pub type DenseMatrix = matrix::Matrix<f64>;
