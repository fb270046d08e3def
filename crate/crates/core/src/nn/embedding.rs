use rand::Rng;

use super::init_uniform;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Parameters, Tensor, Var};

/// Token embedding table. Row 0 is the padding row.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    /// Rows drawn from `U(-1, 1)` (one-hot inputs have fan-in 1); the
    /// padding row starts at zero.
    pub fn new(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let mut data = init_uniform(rng, vocab_size * dim, 1.0);
        let pad = dim.min(data.len());
        data[..pad].fill(0.0);
        Self {
            table: Tensor::param(vec![vocab_size, dim], data).expect("shape matches"),
        }
    }

    pub fn from_table(table: Tensor) -> Result<Self> {
        match table.shape() {
            [v, d] if *v > 0 && *d > 0 => Ok(Self { table }),
            s => Err(Error::Shape(format!("embedding table must be vocab×dim, got {s:?}"))),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> Var {
        g.param(&self.table)
    }

    /// Looks up `ids`, returning `ids.len() × dim`.
    pub fn forward(&self, g: &mut Graph<'_>, table: Var, ids: &[usize]) -> Result<Var> {
        g.gather(table, ids)
    }
}

impl Parameters for Embedding {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("table".into(), &self.table)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("table".into(), &mut self.table)]
    }
}
