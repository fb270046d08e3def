use rand::Rng;

use crate::data::{pad_batch, TokenSequence};
use crate::error::{Error, Result};
use crate::nn::{BiLstm, BiLstmVars, Embedding};
use crate::numerics::{scoped, Graph, Parameters, Tensor, Var};

/// Embedding → BiLSTM → masked mean pool. Produces the essay
/// representation `z` of width `2·hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub embedding: Embedding,
    pub lstm: BiLstm,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub table: Var,
    pub lstm: BiLstmVars,
}

impl EncoderVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.table];
        v.extend(self.lstm.vars());
        v
    }
}

impl Encoder {
    pub fn new(vocab_size: usize, embed_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let embedding = Embedding::new(vocab_size, embed_dim, rng);
        let lstm = BiLstm::new(embed_dim, hidden_dim, rng);
        Self { embedding, lstm }
    }

    pub fn from_parts(embedding: Embedding, lstm: BiLstm) -> Result<Self> {
        if embedding.dim() != lstm.input_dim() {
            return Err(Error::Shape(format!(
                "embedding width {} does not feed lstm input {}",
                embedding.dim(),
                lstm.input_dim()
            )));
        }
        Ok(Self { embedding, lstm })
    }

    pub fn output_dim(&self) -> usize {
        self.lstm.output_dim()
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> EncoderVars {
        EncoderVars {
            table: self.embedding.bind(g),
            lstm: self.lstm.bind(g),
        }
    }

    /// Encodes a batch into `batch × 2·hidden`.
    pub fn encode(&self, g: &mut Graph<'_>, vars: &EncoderVars, batch: &[&TokenSequence]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if let Some(i) = batch.iter().position(|s| s.is_empty() || !s.mask.iter().any(|&m| m)) {
            return Err(Error::DegenerateInput(format!("sequence {i} has no tokens")));
        }
        let (ids, mask, _) = pad_batch(batch);
        let x = self.embedding.forward(g, vars.table, &ids)?;
        let states = self.lstm.forward(g, &vars.lstm, x, batch.len(), &mask)?;
        g.masked_mean(states, &mask, batch.len())
    }
}

impl Parameters for Encoder {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut p = scoped("embedding", self.embedding.named_params());
        p.extend(scoped("lstm", self.lstm.named_params()));
        p
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = scoped("embedding", self.embedding.named_params_mut());
        p.extend(scoped("lstm", self.lstm.named_params_mut()));
        p
    }
}
