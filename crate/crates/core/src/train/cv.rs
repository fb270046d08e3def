use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::fit::{evaluate, fit};
use super::metrics::EvalReport;
use crate::data::{kfold_indices, LabeledEssay};
use crate::error::{Error, Result};
use crate::model::GradingModel;

/// Share of each training portion held out for early stopping.
pub const CV_VALIDATION_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub best_epoch: usize,
    pub report: EvalReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub grade_accuracy: f64,
    pub grade_macro_f1: f64,
    pub grade_weighted_f1: f64,
    pub mean_concept_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub k: usize,
    pub folds: Vec<FoldReport>,
    pub mean: MetricSummary,
    /// Sample standard deviation across folds.
    pub std: MetricSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn summarize(reports: &[EvalReport]) -> (MetricSummary, MetricSummary) {
    let pick = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    let (acc_m, acc_s) = pick(|r| r.grade_accuracy);
    let (mac_m, mac_s) = pick(|r| r.grade_macro_f1);
    let (wf_m, wf_s) = pick(|r| r.grade_weighted_f1);
    let concept: Option<Vec<f64>> = reports.iter().map(EvalReport::mean_concept_accuracy).collect();
    let concept = concept.filter(|c| !c.is_empty()).map(|c| mean_std(&c));
    (
        MetricSummary {
            grade_accuracy: acc_m,
            grade_macro_f1: mac_m,
            grade_weighted_f1: wf_m,
            mean_concept_accuracy: concept.map(|c| c.0),
        },
        MetricSummary {
            grade_accuracy: acc_s,
            grade_macro_f1: mac_s,
            grade_weighted_f1: wf_s,
            mean_concept_accuracy: concept.map(|c| c.1),
        },
    )
}

/// Seeded k-fold cross-validation. For each fold a fresh model is built by
/// `build` from the training portion, trained with a small validation
/// holdout for early stopping, and evaluated on the held-out fold.
pub fn cross_validate<M, F>(
    essays: &[LabeledEssay],
    k: usize,
    config: &TrainingConfig,
    mut build: F,
) -> Result<CrossValidation>
where
    M: GradingModel,
    F: FnMut(&[LabeledEssay]) -> Result<M>,
{
    let folds = kfold_indices(essays.len(), k, config.seed)?;
    let mut results = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let mut rest: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        if rest.len() < 2 {
            return Err(Error::Contract(format!(
                "fold {f} leaves {} training items; need at least 2",
                rest.len()
            )));
        }
        rest.sort_unstable();
        rest.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(f as u64 + 1)));
        let n_val = ((rest.len() as f64 * CV_VALIDATION_FRACTION).round() as usize).clamp(1, rest.len() - 1);
        let pick = |idx: &[usize]| -> Vec<LabeledEssay> { idx.iter().map(|&i| essays[i].clone()).collect() };
        let validation = pick(&rest[..n_val]);
        let train = pick(&rest[n_val..]);
        let test = pick(test_idx);

        let model = build(&train)?;
        let outcome = fit(model, &train, &validation, config)?;
        let report = evaluate(&outcome.model, &test)?;
        tracing::info!(fold = f, accuracy = report.grade_accuracy, "fold finished");
        results.push(FoldReport {
            fold: f,
            train_size: train.len(),
            validation_size: validation.len(),
            test_size: test.len(),
            best_epoch: outcome.best_epoch,
            report,
        });
    }
    let reports: Vec<EvalReport> = results.iter().map(|r| r.report.clone()).collect();
    let (mean, std) = summarize(&reports);
    Ok(CrossValidation {
        k,
        folds: results,
        mean,
        std,
    })
}
