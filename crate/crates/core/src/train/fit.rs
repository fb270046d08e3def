use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{StopMetric, TrainingConfig};
use super::early_stop::EarlyStopping;
use super::loss::{joint_loss_graph, LossBreakdown};
use super::metrics::{EvalReport, ReportBuilder};
use crate::data::{ConceptVector, LabeledEssay, TokenSequence, Vocab};
use crate::error::{Error, Result};
use crate::model::GradingModel;
use crate::numerics::{Adam, Graph};

const EVAL_BATCH: usize = 32;

/// Tokenized essays with their targets.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub tokens: Vec<TokenSequence>,
    pub concepts: Vec<ConceptVector>,
    pub grades: Vec<u8>,
}

impl Encoded {
    pub fn new(vocab: &Vocab, essays: &[LabeledEssay]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(essays.len());
        for e in essays {
            let t = vocab.tokenize(&e.text);
            if t.is_empty() {
                return Err(Error::DegenerateInput(format!("essay {:?} has no tokens", e.id)));
            }
            tokens.push(t);
        }
        Ok(Self {
            tokens,
            concepts: essays.iter().map(|e| e.concepts).collect(),
            grades: essays.iter().map(|e| e.grade).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: LossBreakdown,
    pub val_loss: LossBreakdown,
    pub val_grade_accuracy: f64,
    pub val_grade_macro_f1: f64,
    pub val_grade_weighted_f1: f64,
    pub val_mean_concept_accuracy: Option<f64>,
    pub metric: f64,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct FitOutcome<M> {
    /// Parameters from `best_epoch`.
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Gradient of the joint loss on one batch, accumulated into the model's
/// parameter gradients. Returns the batch loss.
pub fn accumulate_batch_gradients<M: GradingModel>(
    model: &mut M,
    batch: &[&TokenSequence],
    concepts: &[ConceptVector],
    grades: &[u8],
    lambda: f64,
) -> Result<LossBreakdown> {
    let (vars, grads, loss) = {
        let mut g = Graph::new();
        let vars = model.bind(&mut g);
        let out = model.forward_train(&mut g, &vars, batch)?;
        let loss = joint_loss_graph(&mut g, &out.concept_logits, concepts, out.grade_logits, grades, lambda)?;
        let breakdown = loss.breakdown(&g);
        (M::flat_vars(&vars), g.backward(loss.total)?, breakdown)
    };
    model.absorb_grads(&vars, &grads)?;
    Ok(loss)
}

/// Sample-weighted mean of the joint loss over `data`, without gradients.
pub fn mean_loss<M: GradingModel>(model: &M, data: &Encoded, lambda: f64) -> Result<LossBreakdown> {
    if data.is_empty() {
        return Err(Error::Contract("loss over an empty dataset".into()));
    }
    let (mut grade, mut concept) = (0.0, 0.0);
    for start in (0..data.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(data.len());
        let batch: Vec<&TokenSequence> = data.tokens[start..end].iter().collect();
        let mut g = Graph::new();
        let vars = model.bind(&mut g);
        let out = model.forward_train(&mut g, &vars, &batch)?;
        let loss = joint_loss_graph(
            &mut g,
            &out.concept_logits,
            &data.concepts[start..end],
            out.grade_logits,
            &data.grades[start..end],
            lambda,
        )?
        .breakdown(&g);
        let w = (end - start) as f64;
        grade += loss.grade_loss * w;
        concept += loss.concept_loss * w;
    }
    let n = data.len() as f64;
    Ok(LossBreakdown::new(grade / n, concept / n, lambda))
}

/// Hard-path evaluation of `model` on already tokenized data.
pub fn evaluate_encoded<M: GradingModel>(model: &M, data: &Encoded) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty dataset".into()));
    }
    let mut report = ReportBuilder::new(model.kind());
    for start in (0..data.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(data.len());
        let batch: Vec<&TokenSequence> = data.tokens[start..end].iter().collect();
        for (i, p) in model.predict_batch(&batch)?.into_iter().enumerate() {
            let truth = &data.concepts[start + i];
            report.record(
                (data.grades[start + i], p.grade),
                p.concepts.as_ref().map(|c| (truth, c)),
            )?;
        }
    }
    Ok(report.finish())
}

/// Accuracy, F1 scores and confusion matrices on `essays`.
pub fn evaluate<M: GradingModel>(model: &M, essays: &[LabeledEssay]) -> Result<EvalReport> {
    if essays.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty dataset".into()));
    }
    evaluate_encoded(model, &Encoded::new(model.vocab(), essays)?)
}

fn metric_value(report: &EvalReport, metric: StopMetric) -> f64 {
    match metric {
        StopMetric::GradeMacroF1 => report.grade_macro_f1,
        StopMetric::GradeAccuracy => report.grade_accuracy,
        StopMetric::GradeWeightedF1 => report.grade_weighted_f1,
        StopMetric::MeanConceptAccuracy => report.mean_concept_accuracy().unwrap_or(f64::NAN),
    }
}

/// Mini-batch Adam training with early stopping on the validation set.
/// Returns the parameters of the best epoch.
pub fn fit<M: GradingModel>(
    mut model: M,
    train: &[LabeledEssay],
    validation: &[LabeledEssay],
    config: &TrainingConfig,
) -> Result<FitOutcome<M>> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Contract(format!(
            "training needs non-empty splits (train {}, validation {})",
            train.len(),
            validation.len()
        )));
    }
    let train_data = Encoded::new(model.vocab(), train)?;
    let val_data = Encoded::new(model.vocab(), validation)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adam::new(config.adam())?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    model.zero_grad();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut grade_sum, mut concept_sum) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TokenSequence> = chunk.iter().map(|&i| &train_data.tokens[i]).collect();
            let concepts: Vec<ConceptVector> = chunk.iter().map(|&i| train_data.concepts[i]).collect();
            let grades: Vec<u8> = chunk.iter().map(|&i| train_data.grades[i]).collect();
            let loss = accumulate_batch_gradients(&mut model, &batch, &concepts, &grades, config.lambda)?;
            optimizer.step(&mut model.params_mut())?;
            model.zero_grad();
            grade_sum += loss.grade_loss * chunk.len() as f64;
            concept_sum += loss.concept_loss * chunk.len() as f64;
        }
        let n = train_data.len() as f64;
        let train_loss = LossBreakdown::new(grade_sum / n, concept_sum / n, config.lambda);

        let report = evaluate_encoded(&model, &val_data)?;
        let val_loss = mean_loss(&model, &val_data, config.lambda)?;
        let metric = metric_value(&report, config.stop_metric);
        let decision = stopper.observe(epoch, metric);
        if decision.improved {
            best = model.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_grade_accuracy: report.grade_accuracy,
            val_grade_macro_f1: report.grade_macro_f1,
            val_grade_weighted_f1: report.grade_weighted_f1,
            val_mean_concept_accuracy: report.mean_concept_accuracy(),
            metric,
            improved: decision.improved,
        };
        tracing::info!(
            epoch,
            train_total = record.train_loss.total,
            val_total = record.val_loss.total,
            metric,
            improved = decision.improved,
            "epoch finished"
        );
        history.push(record);
        if decision.stop {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    let best_epoch = stopper.best_epoch().unwrap_or(history.len());
    if stopper.best_epoch().is_none() {
        best = model;
    }
    best.provenance_mut().training = Some(serde_json::json!({
        "config": config,
        "best_epoch": best_epoch,
        "epochs_run": history.len(),
        "train_size": train.len(),
        "validation_size": validation.len(),
    }));
    Ok(FitOutcome {
        model: best,
        history,
        best_epoch,
        stopped_early,
    })
}

pub fn write_history(out: &mut impl Write, history: &[EpochRecord]) -> Result<()> {
    for r in history {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<history>", e))?;
    }
    Ok(())
}

pub fn save_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_history(&mut buf, history)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
