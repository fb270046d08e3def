use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rubric concepts in their fixed order. Index `k` here is concept `k + 1`
/// in user-facing (1-based) numbering.
pub const CONCEPT_NAMES: [&str; NUM_CONCEPTS] = [
    "thesis_clarity",
    "use_of_evidence",
    "organization_coherence",
    "grammar_mechanics",
    "vocabulary_appropriateness",
    "sentence_variety",
    "critical_thinking_depth",
    "fluency",
];

pub const NUM_CONCEPTS: usize = 8;
/// Scores 0–4.
pub const CONCEPT_CLASSES: usize = 5;
/// Grades 0–5.
pub const GRADE_CLASSES: usize = 6;
/// Width of the one-hot concept encoding consumed by the grade head.
pub const BOTTLENECK_WIDTH: usize = NUM_CONCEPTS * CONCEPT_CLASSES;

/// Zero-based position of a concept name, if it exists.
pub fn concept_index(name: &str) -> Option<usize> {
    CONCEPT_NAMES.iter().position(|n| *n == name)
}

/// Eight concept scores, each in `0..=4`, in schema order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct ConceptVector([u8; NUM_CONCEPTS]);

impl ConceptVector {
    pub fn new(scores: [u8; NUM_CONCEPTS]) -> Result<Self> {
        let bad: Vec<String> = scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s as usize >= CONCEPT_CLASSES)
            .map(|(k, s)| format!("{}: {s} out of range [0,4]", CONCEPT_NAMES[k]))
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        Ok(Self(scores))
    }

    /// Builds from arbitrary integers, reporting every offending position.
    pub fn from_slice(scores: &[i64]) -> Result<Self> {
        let mut problems = Vec::new();
        if scores.len() != NUM_CONCEPTS {
            problems.push(format!("expected {NUM_CONCEPTS} concept scores, got {}", scores.len()));
        }
        for (k, &s) in scores.iter().enumerate().take(NUM_CONCEPTS) {
            if !(0..CONCEPT_CLASSES as i64).contains(&s) {
                problems.push(format!("concepts[{k}] ({}): {s} out of range [0,4]", CONCEPT_NAMES[k]));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let mut out = [0u8; NUM_CONCEPTS];
        out.iter_mut().zip(scores).for_each(|(o, &s)| *o = s as u8);
        Ok(Self(out))
    }

    pub fn scores(&self) -> [u8; NUM_CONCEPTS] {
        self.0
    }

    /// Score of zero-based concept `k`.
    pub fn get(&self, k: usize) -> u8 {
        self.0[k]
    }

    /// Copy with zero-based concept `k` set to `score`.
    pub fn with(&self, k: usize, score: u8) -> Result<Self> {
        if k >= NUM_CONCEPTS {
            return Err(Error::Validation(vec![format!("concept index {k} out of range")]));
        }
        let mut s = self.0;
        s[k] = score;
        Self::new(s)
    }

    /// Concatenated one-hot blocks, `8 × 5 = 40` wide.
    pub fn one_hot(&self) -> [f64; BOTTLENECK_WIDTH] {
        let mut out = [0.0; BOTTLENECK_WIDTH];
        for (k, &s) in self.0.iter().enumerate() {
            out[k * CONCEPT_CLASSES + s as usize] = 1.0;
        }
        out
    }

    /// Every one of the `5^8` vectors, in lexicographic order.
    pub fn all() -> impl Iterator<Item = ConceptVector> {
        (0..CONCEPT_CLASSES.pow(NUM_CONCEPTS as u32)).map(|mut code| {
            let mut s = [0u8; NUM_CONCEPTS];
            for slot in s.iter_mut().rev() {
                *slot = (code % CONCEPT_CLASSES) as u8;
                code /= CONCEPT_CLASSES;
            }
            ConceptVector(s)
        })
    }
}

impl TryFrom<Vec<i64>> for ConceptVector {
    type Error = Error;

    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::from_slice(&v)
    }
}

impl From<ConceptVector> for Vec<i64> {
    fn from(c: ConceptVector) -> Self {
        c.0.iter().map(|&s| s as i64).collect()
    }
}

impl fmt::Display for ConceptVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// One dataset record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledEssay {
    pub id: String,
    pub text: String,
    /// 0–5.
    pub grade: u8,
    pub concepts: ConceptVector,
}
