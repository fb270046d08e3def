use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{Encoder, EncoderVars};
use super::{GradingModel, HardPrediction, ModelDims, ModelKind, Provenance, TrainOutputs};
use crate::data::{
    ConceptVector, TokenSequence, Vocab, BOTTLENECK_WIDTH, CONCEPT_CLASSES, GRADE_CLASSES, NUM_CONCEPTS,
};
use crate::error::{Error, Result};
use crate::nn::{Linear, LinearVars, Mlp};
use crate::numerics::{argmax, scoped, softmax_slice, Graph, Parameters, Tensor, Var};

/// Concept scores predicted for one essay.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptPrediction {
    pub concepts: ConceptVector,
    pub logits: [[f64; CONCEPT_CLASSES]; NUM_CONCEPTS],
    pub probs: [[f64; CONCEPT_CLASSES]; NUM_CONCEPTS],
}

/// Output of the grade head for one concept vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GradePrediction {
    pub grade: u8,
    pub logits: [f64; GRADE_CLASSES],
    pub probs: [f64; GRADE_CLASSES],
}

/// The grade head `h`: an MLP from the 40-wide concept encoding to six
/// grade logits. It has no input other than the concept encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct GradeHead {
    pub mlp: Mlp,
}

impl GradeHead {
    pub fn new(hidden: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut dims = vec![BOTTLENECK_WIDTH];
        dims.extend_from_slice(hidden);
        dims.push(GRADE_CLASSES);
        Self::from_mlp(Mlp::new(&dims, rng)?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.input_dim() != BOTTLENECK_WIDTH || mlp.output_dim() != GRADE_CLASSES {
            return Err(Error::Shape(format!(
                "grade head must map {BOTTLENECK_WIDTH} -> {GRADE_CLASSES}, got {} -> {}",
                mlp.input_dim(),
                mlp.output_dim()
            )));
        }
        Ok(Self { mlp })
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.mlp.layers[..self.mlp.layers.len() - 1]
            .iter()
            .map(Linear::output_dim)
            .collect()
    }

    /// Hard path: one-hot encode `concepts`, run `h`, take the argmax.
    pub fn predict(&self, concepts: &ConceptVector) -> GradePrediction {
        let raw = self
            .mlp
            .eval_row(&concepts.one_hot())
            .expect("grade head width is fixed at construction");
        let mut logits = [0.0; GRADE_CLASSES];
        logits.copy_from_slice(&raw);
        let mut probs = [0.0; GRADE_CLASSES];
        probs.copy_from_slice(&softmax_slice(&logits));
        GradePrediction {
            grade: argmax(&logits) as u8,
            logits,
            probs,
        }
    }
}

impl Parameters for GradeHead {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.mlp.named_params()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.mlp.named_params_mut()
    }
}

/// Concept-bottleneck model: text → eight concept scores → grade.
#[derive(Clone, Debug, PartialEq)]
pub struct EssayCbmModel {
    pub vocab: Vocab,
    pub encoder: Encoder,
    pub concept_heads: Vec<Linear>,
    pub grade_head: GradeHead,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct CbmVars {
    pub encoder: EncoderVars,
    pub heads: Vec<LinearVars>,
    pub grade_head: Vec<LinearVars>,
}

impl EssayCbmModel {
    pub fn new(vocab: Vocab, dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(vocab.len(), dims.embed_dim, dims.hidden_dim, &mut rng);
        let z = encoder.output_dim();
        let concept_heads = (0..NUM_CONCEPTS)
            .map(|_| Linear::new(z, CONCEPT_CLASSES, &mut rng))
            .collect();
        let grade_head = GradeHead::new(&dims.grade_hidden, &mut rng)?;
        Ok(Self {
            vocab,
            encoder,
            concept_heads,
            grade_head,
            provenance: Provenance {
                init_seed: Some(seed),
                training: None,
            },
        })
    }

    pub fn from_parts(
        vocab: Vocab,
        encoder: Encoder,
        concept_heads: Vec<Linear>,
        grade_head: GradeHead,
        provenance: Provenance,
    ) -> Result<Self> {
        if concept_heads.len() != NUM_CONCEPTS {
            return Err(Error::Shape(format!(
                "expected {NUM_CONCEPTS} concept heads, got {}",
                concept_heads.len()
            )));
        }
        let z = encoder.output_dim();
        if let Some(h) = concept_heads
            .iter()
            .find(|h| h.input_dim() != z || h.output_dim() != CONCEPT_CLASSES)
        {
            return Err(Error::Shape(format!(
                "concept head {}x{} does not match z width {z}",
                h.input_dim(),
                h.output_dim()
            )));
        }
        if encoder.embedding.vocab_size() != vocab.len() {
            return Err(Error::Shape(format!(
                "embedding has {} rows for a vocabulary of {}",
                encoder.embedding.vocab_size(),
                vocab.len()
            )));
        }
        Ok(Self {
            vocab,
            encoder,
            concept_heads,
            grade_head,
            provenance,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            embed_dim: self.encoder.embedding.dim(),
            hidden_dim: self.encoder.lstm.hidden_dim(),
            grade_hidden: self.grade_head.hidden_dims(),
        }
    }

    /// Graph-level concept logits (`batch × 5` per head) for a batch.
    pub fn concept_logits_graph(
        &self,
        g: &mut Graph<'_>,
        vars: &CbmVars,
        batch: &[&TokenSequence],
    ) -> Result<Vec<Var>> {
        let z = self.encoder.encode(g, &vars.encoder, batch)?;
        self.concept_heads
            .iter()
            .zip(&vars.heads)
            .map(|(head, v)| head.forward(g, v, z))
            .collect()
    }

    /// Soft bottleneck: concatenated softmax rows of every head → `h`.
    pub fn grade_logits_soft(&self, g: &mut Graph<'_>, vars: &CbmVars, concept_logits: &[Var]) -> Result<Var> {
        let probs = concept_logits
            .iter()
            .map(|&l| g.softmax(l))
            .collect::<Result<Vec<_>>>()?;
        let bottleneck = g.concat_cols(&probs)?;
        self.grade_head.mlp.forward(g, &vars.grade_head, bottleneck)
    }

    /// Eight logit rows of width 5 for one essay.
    pub fn forward_concept_logits(&self, tokens: &TokenSequence) -> Result<[[f64; CONCEPT_CLASSES]; NUM_CONCEPTS]> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let heads = self.concept_logits_graph(&mut g, &vars, &[tokens])?;
        let mut out = [[0.0; CONCEPT_CLASSES]; NUM_CONCEPTS];
        for (row, v) in out.iter_mut().zip(heads) {
            row.copy_from_slice(g.value(v));
        }
        Ok(out)
    }

    /// Per-head argmax (ties to the lowest class) and softmax rows.
    pub fn predict_concepts(&self, tokens: &TokenSequence) -> Result<ConceptPrediction> {
        Ok(concepts_from_logits(self.forward_concept_logits(tokens)?))
    }

    /// `h` applied to the one-hot encoding of `concepts`. Reads nothing else.
    pub fn grade_from_concepts(&self, concepts: &ConceptVector) -> GradePrediction {
        self.grade_head.predict(concepts)
    }

    /// Training-time path: concept logits and the soft-bottleneck grade
    /// logits for one essay.
    pub fn forward_joint(
        &self,
        tokens: &TokenSequence,
    ) -> Result<([[f64; CONCEPT_CLASSES]; NUM_CONCEPTS], [f64; GRADE_CLASSES])> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.forward_train(&mut g, &vars, &[tokens])?;
        let mut concepts = [[0.0; CONCEPT_CLASSES]; NUM_CONCEPTS];
        for (row, v) in concepts.iter_mut().zip(&out.concept_logits) {
            row.copy_from_slice(g.value(*v));
        }
        let mut grade = [0.0; GRADE_CLASSES];
        grade.copy_from_slice(g.value(out.grade_logits));
        Ok((concepts, grade))
    }

    /// Full pipeline: predicted concepts, then `h` on the hard vector.
    pub fn predict(&self, tokens: &TokenSequence) -> Result<(ConceptPrediction, GradePrediction)> {
        let concepts = self.predict_concepts(tokens)?;
        let grade = self.grade_from_concepts(&concepts.concepts);
        Ok((concepts, grade))
    }
}

pub(crate) fn concepts_from_logits(logits: [[f64; CONCEPT_CLASSES]; NUM_CONCEPTS]) -> ConceptPrediction {
    let mut probs = [[0.0; CONCEPT_CLASSES]; NUM_CONCEPTS];
    let mut scores = [0u8; NUM_CONCEPTS];
    for k in 0..NUM_CONCEPTS {
        probs[k].copy_from_slice(&softmax_slice(&logits[k]));
        scores[k] = argmax(&logits[k]) as u8;
    }
    ConceptPrediction {
        concepts: ConceptVector::new(scores).expect("argmax of 5 classes"),
        logits,
        probs,
    }
}

impl Parameters for EssayCbmModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut p = scoped("encoder", self.encoder.named_params());
        for (k, h) in self.concept_heads.iter().enumerate() {
            p.extend(scoped(&format!("concept_heads.{k}"), h.named_params()));
        }
        p.extend(scoped("grade_head", self.grade_head.named_params()));
        p
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = scoped("encoder", self.encoder.named_params_mut());
        for (k, h) in self.concept_heads.iter_mut().enumerate() {
            p.extend(scoped(&format!("concept_heads.{k}"), h.named_params_mut()));
        }
        p.extend(scoped("grade_head", self.grade_head.named_params_mut()));
        p
    }
}

impl GradingModel for EssayCbmModel {
    type Vars = CbmVars;
    const KIND: ModelKind = ModelKind::Cbm;

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

    fn bind<'p>(&'p self, g: &mut Graph<'p>) -> CbmVars {
        CbmVars {
            encoder: self.encoder.bind(g),
            heads: self.concept_heads.iter().map(|h| h.bind(g)).collect(),
            grade_head: self.grade_head.mlp.bind(g),
        }
    }

    fn flat_vars(vars: &CbmVars) -> Vec<Var> {
        let mut v = vars.encoder.vars();
        for h in &vars.heads {
            v.extend(h.vars());
        }
        for l in &vars.grade_head {
            v.extend(l.vars());
        }
        v
    }

    fn forward_train(&self, g: &mut Graph<'_>, vars: &CbmVars, batch: &[&TokenSequence]) -> Result<TrainOutputs> {
        let concept_logits = self.concept_logits_graph(g, vars, batch)?;
        let grade_logits = self.grade_logits_soft(g, vars, &concept_logits)?;
        Ok(TrainOutputs {
            concept_logits,
            grade_logits,
        })
    }

    fn predict_batch(&self, batch: &[&TokenSequence]) -> Result<Vec<HardPrediction>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let heads = self.concept_logits_graph(&mut g, &vars, batch)?;
        (0..batch.len())
            .map(|b| {
                let mut logits = [[0.0; CONCEPT_CLASSES]; NUM_CONCEPTS];
                for (row, &v) in logits.iter_mut().zip(&heads) {
                    row.copy_from_slice(&g.value(v)[b * CONCEPT_CLASSES..(b + 1) * CONCEPT_CLASSES]);
                }
                let concepts = concepts_from_logits(logits).concepts;
                Ok(HardPrediction {
                    concepts: Some(concepts),
                    grade: self.grade_from_concepts(&concepts).grade,
                })
            })
            .collect()
    }
}
