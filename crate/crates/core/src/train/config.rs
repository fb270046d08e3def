use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

/// Validation quantity watched by early stopping. Higher is better for all
/// of them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    GradeMacroF1,
    GradeAccuracy,
    GradeWeightedF1,
    MeanConceptAccuracy,
}

impl std::str::FromStr for StopMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grade_macro_f1" => Ok(Self::GradeMacroF1),
            "grade_accuracy" => Ok(Self::GradeAccuracy),
            "grade_weighted_f1" => Ok(Self::GradeWeightedF1),
            "mean_concept_accuracy" => Ok(Self::MeanConceptAccuracy),
            other => Err(Error::Validation(vec![format!("unknown stop metric {other:?}")])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda: f64,
    pub seed: u64,
    pub stop_metric: StopMetric,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 8,
            max_epochs: 20,
            patience: 5,
            lambda: 0.5,
            seed: 0,
            stop_metric: StopMetric::default(),
        }
    }
}

impl TrainingConfig {
    /// Learning rate used for from-scratch runs on the synthetic corpus.
    pub const SYNTHETIC_LEARNING_RATE: f64 = 1e-3;

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            problems.push(format!("lambda must be a finite value >= 0, got {}", self.lambda));
        }
        if self.patience < 1 {
            problems.push("patience must be >= 1".to_string());
        }
        if self.batch_size < 1 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if self.max_epochs < 1 {
            problems.push("max_epochs must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}
