//! The concept-bottleneck model `X → C → Y`, the black-box baseline
//! `X → Y`, and checkpoint persistence.

mod baseline;
mod cbm;
mod checkpoint;
mod encoder;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::{BaselineModel, BaselineVars};
pub use cbm::{CbmVars, ConceptPrediction, EssayCbmModel, GradeHead, GradePrediction};
pub use checkpoint::{
    load_any, load_baseline, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use encoder::{Encoder, EncoderVars};

pub use crate::data::ConceptVector;
use crate::data::{TokenSequence, Vocab};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Parameters, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cbm,
    Baseline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cbm => "cbm",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbm" => Ok(ModelKind::Cbm),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::Validation(vec![format!(
                "unknown model kind {other:?} (expected cbm or baseline)"
            )])),
        }
    }
}

/// Architecture sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub embed_dim: usize,
    /// Per direction; the essay representation is twice this wide.
    pub hidden_dim: usize,
    /// Hidden widths of the grade head (bottleneck model only).
    pub grade_hidden: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            hidden_dim: 128,
            grade_hidden: vec![64, 64],
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.grade_hidden.contains(&0) {
            return Err(Error::Validation(vec![format!(
                "dimensions must be positive: {self:?}"
            )]));
        }
        Ok(())
    }
}

/// Where a model came from: the initialization seed and, once trained, an
/// echo of the training configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub init_seed: Option<u64>,
    pub training: Option<serde_json::Value>,
}

/// Graph outputs used by the training loop. `concept_logits` is empty for
/// models without a bottleneck.
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub concept_logits: Vec<Var>,
    pub grade_logits: Var,
}

/// Inference-path prediction used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardPrediction {
    pub concepts: Option<ConceptVector>,
    pub grade: u8,
}

/// What the trainer and evaluator need from an architecture.
pub trait GradingModel: Parameters + Clone + Send + Sync {
    type Vars;
    const KIND: ModelKind;

    fn vocab(&self) -> &Vocab;
    fn dims(&self) -> ModelDims;
    fn provenance(&self) -> &Provenance;
    fn provenance_mut(&mut self) -> &mut Provenance;

    /// Places every parameter on `g` as a leaf.
    fn bind<'p>(&'p self, g: &mut Graph<'p>) -> Self::Vars;

    /// Bound leaves in [`Parameters::named_params`] order.
    fn flat_vars(vars: &Self::Vars) -> Vec<Var>;

    fn forward_train(&self, g: &mut Graph<'_>, vars: &Self::Vars, batch: &[&TokenSequence]) -> Result<TrainOutputs>;

    /// Hard predictions (argmax concepts, then grade) for a batch.
    fn predict_batch(&self, batch: &[&TokenSequence]) -> Result<Vec<HardPrediction>>;

    fn kind(&self) -> ModelKind {
        Self::KIND
    }

    /// Adds gradients from `grads` into the matching parameters.
    fn absorb_grads(&mut self, vars: &[Var], grads: &crate::numerics::Gradients) -> Result<()> {
        let params = self.params_mut();
        if params.len() != vars.len() {
            return Err(Error::Contract(format!(
                "{} bound vars for {} parameters",
                vars.len(),
                params.len()
            )));
        }
        for (p, &v) in params.into_iter().zip(vars) {
            grads.accumulate_into(v, p)?;
        }
        Ok(())
    }
}

/// A checkpoint of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Cbm(EssayCbmModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Cbm(_) => ModelKind::Cbm,
            AnyModel::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn dims(&self) -> ModelDims {
        match self {
            AnyModel::Cbm(m) => m.dims(),
            AnyModel::Baseline(m) => m.dims(),
        }
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            AnyModel::Cbm(m) => &m.vocab,
            AnyModel::Baseline(m) => &m.vocab,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        match self {
            AnyModel::Cbm(m) => &m.provenance,
            AnyModel::Baseline(m) => &m.provenance,
        }
    }

    pub fn as_cbm(&self) -> Result<&EssayCbmModel> {
        match self {
            AnyModel::Cbm(m) => Ok(m),
            AnyModel::Baseline(_) => Err(Error::KindMismatch {
                found: ModelKind::Baseline.to_string(),
                expected: ModelKind::Cbm.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests;
