//! Resonance frequency to liquid level: spline regression, pairwise linear
//! classification, evaluation metrics and model files.

mod classifier;
mod metrics;
mod model_io;
mod spline;

use thiserror::Error;

pub use classifier::{
    predict_discrete, train_classifier, ClassifierModel, LabeledSample, PairwiseFunction, DEFAULT_C_GRID,
};
pub use metrics::{evaluate_continuous, evaluate_discrete, ClassMetrics, ContinuousReport, DiscreteReport, EvalReport};
pub use model_io::{load_model, save_model, LevelModel, LevelOutput, MODEL_VERSION};
pub use spline::{
    average_by_level, fit_spline, predict_continuous, EndCondition, Knot, LevelPrediction, Segment, SplineModel,
};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("ill-posed fit: {0}")]
    IllPosed(String),
    #[error("degenerate training set: {0}")]
    Degenerate(String),
    #[error("{predictions} predictions but {truth} ground-truth values")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(serde_json::Error),
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: String, expected: u64 },
    #[error("invalid model file: {0}")]
    Schema(String),
}
