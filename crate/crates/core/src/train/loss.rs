use serde::{Deserialize, Serialize};

use crate::data::{ConceptVector, NUM_CONCEPTS};
use crate::error::{Error, Result};
use crate::numerics::{cross_entropy, Graph, Tensor, Var};

/// `total = grade_loss + lambda · concept_loss`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub grade_loss: f64,
    pub concept_loss: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(grade_loss: f64, concept_loss: f64, lambda: f64) -> Self {
        Self {
            grade_loss,
            concept_loss,
            total: grade_loss + lambda * concept_loss,
        }
    }
}

/// Graph nodes for the three loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub grade: Var,
    pub concept: Option<Var>,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph<'_>) -> LossBreakdown {
        LossBreakdown {
            grade_loss: g.value(self.grade)[0],
            concept_loss: self.concept.map_or(0.0, |c| g.value(c)[0]),
            total: g.value(self.total)[0],
        }
    }
}

fn concept_column(targets: &[ConceptVector], k: usize) -> Vec<usize> {
    targets.iter().map(|c| c.get(k) as usize).collect()
}

/// Joint loss on the graph. `concept_logits` is either empty (no bottleneck;
/// the total is the grade loss) or one `batch × 5` node per concept.
pub fn joint_loss_graph(
    g: &mut Graph<'_>,
    concept_logits: &[Var],
    concept_targets: &[ConceptVector],
    grade_logits: Var,
    grade_targets: &[u8],
    lambda: f64,
) -> Result<LossVars> {
    if concept_targets.len() != grade_targets.len() {
        return Err(Error::Contract(format!(
            "{} concept targets for {} grade targets",
            concept_targets.len(),
            grade_targets.len()
        )));
    }
    let grade_ids: Vec<usize> = grade_targets.iter().map(|&y| y as usize).collect();
    let grade = g.cross_entropy(grade_logits, &grade_ids).map_err(contract)?;
    if concept_logits.is_empty() {
        return Ok(LossVars {
            total: grade,
            grade,
            concept: None,
        });
    }
    if concept_logits.len() != NUM_CONCEPTS {
        return Err(Error::Contract(format!(
            "expected {NUM_CONCEPTS} concept heads, got {}",
            concept_logits.len()
        )));
    }
    let mut sum: Option<Var> = None;
    for (k, &logits) in concept_logits.iter().enumerate() {
        let ce = g
            .cross_entropy(logits, &concept_column(concept_targets, k))
            .map_err(contract)?;
        sum = Some(match sum {
            None => ce,
            Some(s) => g.add(s, ce)?,
        });
    }
    let concept = g.scale(sum.expect("eight heads"), 1.0 / NUM_CONCEPTS as f64);
    let weighted = g.scale(concept, lambda);
    let total = g.add(grade, weighted)?;
    Ok(LossVars {
        total,
        grade,
        concept: Some(concept),
    })
}

/// Value-level joint loss over eight `batch × 5` logit tensors and a
/// `batch × 6` grade logit tensor.
pub fn joint_loss(
    concept_logits: &[Tensor],
    concept_targets: &[ConceptVector],
    grade_logits: &Tensor,
    grade_targets: &[u8],
    lambda: f64,
) -> Result<LossBreakdown> {
    if concept_logits.len() != NUM_CONCEPTS {
        return Err(Error::Contract(format!(
            "expected {NUM_CONCEPTS} concept logit tensors, got {}",
            concept_logits.len()
        )));
    }
    if concept_targets.len() != grade_targets.len() {
        return Err(Error::Contract(format!(
            "{} concept targets for {} grade targets",
            concept_targets.len(),
            grade_targets.len()
        )));
    }
    let grade_ids: Vec<usize> = grade_targets.iter().map(|&y| y as usize).collect();
    let grade_loss = cross_entropy(grade_logits, &grade_ids).map_err(contract)?;
    let mut sum = 0.0;
    for (k, logits) in concept_logits.iter().enumerate() {
        sum += cross_entropy(logits, &concept_column(concept_targets, k)).map_err(contract)?;
    }
    Ok(LossBreakdown::new(
        grade_loss,
        sum * (1.0 / NUM_CONCEPTS as f64),
        lambda,
    ))
}

fn contract(e: Error) -> Error {
    match e {
        Error::Shape(m) | Error::Index(m) => Error::Contract(m),
        other => other,
    }
}
