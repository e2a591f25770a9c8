//! Challenge scoring: per-class AUC, NAUC, NBAC and the learning-curve ALC.

mod auc;
mod curve;

use serde::{Deserialize, Serialize};

pub use auc::{auc, nauc_macro, nbac, per_class_nauc, ScoreMatrix, DEFAULT_NBAC_THRESHOLD};
pub use curve::{AlcConfig, LearningCurve, CURVE_HEADER};

/// Timestamped scores on the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSnapshot {
    pub timestamp: f64,
    pub scores: ScoreMatrix,
}

/// Scoring block of a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub alc: f64,
    pub final_nauc: Option<f64>,
    pub per_class_nauc: Vec<Option<f64>>,
    pub config: AlcConfig,
    pub curve: LearningCurve,
}
