use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{Encoder, EncoderVars};
use super::{GradingModel, HardPrediction, ModelDims, ModelKind, Provenance, TrainOutputs};
use crate::data::{TokenSequence, Vocab, GRADE_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{Linear, LinearVars};
use crate::numerics::{argmax, scoped, Graph, Parameters, Tensor, Var};

/// Black-box baseline: the essay representation maps straight to grade
/// logits through one affine layer. There are no concept heads.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub vocab: Vocab,
    pub encoder: Encoder,
    pub grade_head: Linear,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct BaselineVars {
    pub encoder: EncoderVars,
    pub grade_head: LinearVars,
}

impl BaselineModel {
    pub fn new(vocab: Vocab, dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(vocab.len(), dims.embed_dim, dims.hidden_dim, &mut rng);
        let grade_head = Linear::new(encoder.output_dim(), GRADE_CLASSES, &mut rng);
        Ok(Self {
            vocab,
            encoder,
            grade_head,
            provenance: Provenance {
                init_seed: Some(seed),
                training: None,
            },
        })
    }

    pub fn from_parts(vocab: Vocab, encoder: Encoder, grade_head: Linear, provenance: Provenance) -> Result<Self> {
        if grade_head.input_dim() != encoder.output_dim() || grade_head.output_dim() != GRADE_CLASSES {
            return Err(Error::Shape(format!(
                "baseline head {}x{} does not fit z width {}",
                grade_head.input_dim(),
                grade_head.output_dim(),
                encoder.output_dim()
            )));
        }
        if encoder.embedding.vocab_size() != vocab.len() {
            return Err(Error::Shape("embedding rows do not match the vocabulary".into()));
        }
        Ok(Self {
            vocab,
            encoder,
            grade_head,
            provenance,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            embed_dim: self.encoder.embedding.dim(),
            hidden_dim: self.encoder.lstm.hidden_dim(),
            grade_hidden: Vec::new(),
        }
    }

    /// Six grade logits for one essay.
    pub fn forward(&self, tokens: &TokenSequence) -> Result<[f64; GRADE_CLASSES]> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.forward_train(&mut g, &vars, &[tokens])?;
        let mut logits = [0.0; GRADE_CLASSES];
        logits.copy_from_slice(g.value(out.grade_logits));
        Ok(logits)
    }
}

impl Parameters for BaselineModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut p = scoped("encoder", self.encoder.named_params());
        p.extend(scoped("grade_head", self.grade_head.named_params()));
        p
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = scoped("encoder", self.encoder.named_params_mut());
        p.extend(scoped("grade_head", self.grade_head.named_params_mut()));
        p
    }
}

impl GradingModel for BaselineModel {
    type Vars = BaselineVars;
    const KIND: ModelKind = ModelKind::Baseline;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn dims(&self) -> ModelDims {
        Self::dims(self)
    }

    fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    fn bind<'p>(&'p self, g: &mut Graph<'p>) -> BaselineVars {
        BaselineVars {
            encoder: self.encoder.bind(g),
            grade_head: self.grade_head.bind(g),
        }
    }

    fn flat_vars(vars: &BaselineVars) -> Vec<Var> {
        let mut v = vars.encoder.vars();
        v.extend(vars.grade_head.vars());
        v
    }

    fn forward_train(&self, g: &mut Graph<'_>, vars: &BaselineVars, batch: &[&TokenSequence]) -> Result<TrainOutputs> {
        let z = self.encoder.encode(g, &vars.encoder, batch)?;
        let grade_logits = self.grade_head.forward(g, &vars.grade_head, z)?;
        Ok(TrainOutputs {
            concept_logits: Vec::new(),
            grade_logits,
        })
    }

    fn predict_batch(&self, batch: &[&TokenSequence]) -> Result<Vec<HardPrediction>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.forward_train(&mut g, &vars, batch)?;
        Ok(g.value(out.grade_logits)
            .chunks_exact(GRADE_CLASSES)
            .map(|row| HardPrediction {
                concepts: None,
                grade: argmax(row) as u8,
            })
            .collect())
    }
}
