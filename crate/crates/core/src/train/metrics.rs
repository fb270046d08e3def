use serde::{Deserialize, Serialize};

use crate::data::{CONCEPT_CLASSES, CONCEPT_NAMES, GRADE_CLASSES, NUM_CONCEPTS};
use crate::error::{Error, Result};
use crate::model::ModelKind;

/// Square confusion matrix indexed `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix(pub Vec<Vec<u64>>);

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self(vec![vec![0; classes]; classes])
    }

    pub fn from_pairs(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in labels.iter().zip(predictions) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.classes();
        if truth >= n || predicted >= n {
            return Err(Error::Index(format!("pair ({truth}, {predicted}) outside {n} classes")));
        }
        self.0[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.0[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.0[class].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// `2·TP / (2·TP + FP + FN)`, with 0/0 taken as 0.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.0[class][class];
        let predicted: u64 = self.0.iter().map(|row| row[class]).sum();
        let fp = predicted - tp;
        let fn_ = self.support(class) - tp;
        ratio(2 * tp, 2 * tp + fp + fn_)
    }

    /// Mean F1 over the classes that occur in the labels.
    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..self.classes()).filter(|&c| self.support(c) > 0).collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.f1(c)).sum::<f64>() / present.len() as f64
    }

    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.classes())
            .map(|c| self.support(c) as f64 * self.f1(c))
            .sum::<f64>()
            / total as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Evaluation of a model on a labelled dataset. Concept fields are empty for
/// the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub samples: usize,
    pub grade_accuracy: f64,
    pub grade_macro_f1: f64,
    pub grade_weighted_f1: f64,
    pub grade_confusion: ConfusionMatrix,
    pub concept_names: Vec<String>,
    pub concept_accuracy: Vec<f64>,
    pub concept_macro_f1: Vec<f64>,
    pub concept_confusion: Vec<ConfusionMatrix>,
}

impl EvalReport {
    pub fn from_confusion(
        model_kind: ModelKind,
        grade: ConfusionMatrix,
        concepts: Option<Vec<ConfusionMatrix>>,
    ) -> Self {
        let concepts = concepts.unwrap_or_default();
        Self {
            model_kind,
            samples: grade.total() as usize,
            grade_accuracy: grade.accuracy(),
            grade_macro_f1: grade.macro_f1(),
            grade_weighted_f1: grade.weighted_f1(),
            concept_names: if concepts.is_empty() {
                Vec::new()
            } else {
                CONCEPT_NAMES.iter().map(|s| s.to_string()).collect()
            },
            concept_accuracy: concepts.iter().map(ConfusionMatrix::accuracy).collect(),
            concept_macro_f1: concepts.iter().map(ConfusionMatrix::macro_f1).collect(),
            concept_confusion: concepts,
            grade_confusion: grade,
        }
    }

    pub fn mean_concept_accuracy(&self) -> Option<f64> {
        if self.concept_accuracy.is_empty() {
            None
        } else {
            Some(self.concept_accuracy.iter().sum::<f64>() / self.concept_accuracy.len() as f64)
        }
    }
}

/// Accumulates confusion matrices while predictions stream in.
#[derive(Clone, Debug)]
pub(crate) struct ReportBuilder {
    kind: ModelKind,
    grade: ConfusionMatrix,
    concepts: Option<Vec<ConfusionMatrix>>,
}

impl ReportBuilder {
    pub(crate) fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            grade: ConfusionMatrix::new(GRADE_CLASSES),
            concepts: (kind == ModelKind::Cbm).then(|| vec![ConfusionMatrix::new(CONCEPT_CLASSES); NUM_CONCEPTS]),
        }
    }

    pub(crate) fn record(
        &mut self,
        grade: (u8, u8),
        concepts: Option<(&crate::data::ConceptVector, &crate::data::ConceptVector)>,
    ) -> Result<()> {
        self.grade.record(grade.0 as usize, grade.1 as usize)?;
        if let (Some(ms), Some((truth, pred))) = (self.concepts.as_mut(), concepts) {
            for (k, m) in ms.iter_mut().enumerate() {
                m.record(truth.get(k) as usize, pred.get(k) as usize)?;
            }
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> EvalReport {
        EvalReport::from_confusion(self.kind, self.grade, self.concepts)
    }
}
