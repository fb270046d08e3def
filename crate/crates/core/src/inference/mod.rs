//! Grading single essays, concept interventions and what-if tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{concept_index, ConceptVector, CONCEPT_CLASSES, CONCEPT_NAMES, GRADE_CLASSES, NUM_CONCEPTS};
use crate::error::{Error, Result};
use crate::model::EssayCbmModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptScore {
    /// 1-based position in the concept schema.
    pub index: usize,
    pub name: String,
    pub score: u8,
    pub confidence: f64,
    pub probs: [f64; CONCEPT_CLASSES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradingResult {
    pub essay_id: String,
    pub model_id: String,
    pub concepts: Vec<ConceptScore>,
    pub concept_vector: ConceptVector,
    pub grade: u8,
    pub grade_probs: [f64; GRADE_CLASSES],
}

/// Hex SHA-256 of the essay text.
pub fn essay_id(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn grade_essay(model: &EssayCbmModel, model_id: &str, text: &str) -> Result<GradingResult> {
    let tokens = model.vocab.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyEssay);
    }
    let (concepts, grade) = model.predict(&tokens)?;
    let scores = (0..NUM_CONCEPTS)
        .map(|k| ConceptScore {
            index: k + 1,
            name: CONCEPT_NAMES[k].to_string(),
            score: concepts.concepts.get(k),
            confidence: max_of(&concepts.probs[k]),
            probs: concepts.probs[k],
        })
        .collect();
    Ok(GradingResult {
        essay_id: essay_id(text),
        model_id: model_id.to_string(),
        concepts: scores,
        concept_vector: concepts.concepts,
        grade: grade.grade,
        grade_probs: grade.probs,
    })
}

/// Base concept vector plus overrides keyed by 1-based concept index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterventionRequest {
    pub base: ConceptVector,
    pub overrides: BTreeMap<usize, u8>,
}

fn override_key(key: &str) -> Option<usize> {
    match key.trim().parse::<usize>() {
        Ok(i) => (1..=NUM_CONCEPTS).contains(&i).then_some(i),
        Err(_) => concept_index(key.trim()).map(|k| k + 1),
    }
}

impl InterventionRequest {
    pub fn new(base: ConceptVector, overrides: BTreeMap<usize, u8>) -> Result<Self> {
        let problems: Vec<String> = overrides
            .iter()
            .flat_map(|(&i, &v)| {
                let mut p = Vec::new();
                if !(1..=NUM_CONCEPTS).contains(&i) {
                    p.push(format!("overrides.{i}: index out of range [1,{NUM_CONCEPTS}]"));
                }
                if v as usize >= CONCEPT_CLASSES {
                    p.push(format!("overrides.{i}: {v} out of range [0,4]"));
                }
                p
            })
            .collect();
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self { base, overrides })
    }

    /// Validates untyped input, listing every offending field. Override
    /// keys are 1-based indices or concept names.
    pub fn from_raw(concepts: &[i64], overrides: &BTreeMap<String, i64>) -> Result<Self> {
        let mut problems = Vec::new();
        let base = match ConceptVector::from_slice(concepts) {
            Ok(c) => Some(c),
            Err(Error::Validation(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => return Err(e),
        };
        let mut parsed = BTreeMap::new();
        for (key, &value) in overrides {
            match override_key(key) {
                None => problems.push(format!(
                    "overrides.{key}: not a concept index in [1,{NUM_CONCEPTS}] or a concept name"
                )),
                Some(i) if (0..CONCEPT_CLASSES as i64).contains(&value) => {
                    if parsed.insert(i, value as u8).is_some() {
                        problems.push(format!("overrides.{key}: concept {i} given twice"));
                    }
                }
                Some(_) => problems.push(format!("overrides.{key}: {value} out of range [0,4]")),
            }
        }
        match base {
            Some(base) if problems.is_empty() => Self::new(base, parsed),
            _ => Err(Error::Validation(problems)),
        }
    }

    pub fn effective(&self) -> ConceptVector {
        let mut scores = self.base.scores();
        for (&i, &v) in &self.overrides {
            scores[i - 1] = v;
        }
        ConceptVector::new(scores).expect("validated on construction")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub grade: u8,
    pub grade_probs: [f64; GRADE_CLASSES],
    pub effective_concepts: ConceptVector,
}

/// Applies the overrides and re-runs the grade head. No text is involved.
pub fn intervene(model: &EssayCbmModel, request: &InterventionRequest) -> InterventionResult {
    let effective = request.effective();
    let g = model.grade_from_concepts(&effective);
    InterventionResult {
        grade: g.grade,
        grade_probs: g.probs,
        effective_concepts: effective,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub index: usize,
    pub name: String,
    pub current: u8,
    /// Grade when this concept alone is set to each score 0..=4.
    pub grades: [u8; CONCEPT_CLASSES],
    pub grade_probs: [[f64; GRADE_CLASSES]; CONCEPT_CLASSES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfTable {
    pub concepts: ConceptVector,
    pub grade: u8,
    pub rows: Vec<WhatIfRow>,
}

/// Exact single-concept sensitivity: every concept set to every score.
pub fn explain(model: &EssayCbmModel, concepts: &ConceptVector) -> WhatIfTable {
    let rows = (0..NUM_CONCEPTS)
        .map(|k| {
            let mut grades = [0u8; CONCEPT_CLASSES];
            let mut grade_probs = [[0.0; GRADE_CLASSES]; CONCEPT_CLASSES];
            for v in 0..CONCEPT_CLASSES {
                let c = concepts.with(k, v as u8).expect("score in range");
                let g = model.grade_from_concepts(&c);
                grades[v] = g.grade;
                grade_probs[v] = g.probs;
            }
            WhatIfRow {
                index: k + 1,
                name: CONCEPT_NAMES[k].to_string(),
                current: concepts.get(k),
                grades,
                grade_probs,
            }
        })
        .collect();
    WhatIfTable {
        concepts: *concepts,
        grade: model.grade_from_concepts(concepts).grade,
        rows,
    }
}
