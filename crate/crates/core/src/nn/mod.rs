//! Layers: token embedding, bidirectional LSTM, masked mean pooling and
//! affine/MLP blocks.

mod embedding;
mod linear;
mod lstm;

pub use embedding::Embedding;
pub use linear::{Linear, LinearVars, Mlp};
pub use lstm::{BiLstm, BiLstmVars, LstmDirection, LstmDirectionVars};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub(crate) fn init_uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Mean of the rows of a `T × D` tensor whose mask entry is `true`.
pub fn mean_pool(states: &Tensor, mask: &[bool]) -> Result<Vec<f64>> {
    let [rows, width] = *states.shape() else {
        return Err(Error::Shape(format!("mean_pool expects T×D, got {:?}", states.shape())));
    };
    if mask.len() != rows {
        return Err(Error::Shape(format!("mask of {} for {rows} rows", mask.len())));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::DegenerateInput("every step is masked".into()));
    }
    let mut out = vec![0.0; width];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        out.iter_mut().zip(states.row(i)).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= count as f64);
    Ok(out)
}
