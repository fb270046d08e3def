//! Value-level softmax and cross-entropy. The graph versions live on
//! [`Graph`](super::Graph) and share these kernels.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Softmax over the last axis of a rank-1 or rank-2 tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let cols = match logits.shape() {
        [c] | [_, c] => *c,
        s => return Err(Error::Shape(format!("softmax: rank-1 or rank-2 expected, got {s:?}"))),
    };
    if cols == 0 {
        return Err(Error::Shape("softmax: empty row".into()));
    }
    let mut out = vec![0.0; logits.numel()];
    for (src, dst) in logits.data().chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        kernels::softmax_row(src, dst);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Softmax of a single row of logits.
pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    kernels::softmax_row(logits, &mut out);
    out
}

/// Mean cross-entropy of `batch × classes` logits against class indices.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    let [rows, cols] = *logits.shape() else {
        return Err(Error::Shape(format!(
            "cross_entropy: rank-2 logits expected, got {:?}",
            logits.shape()
        )));
    };
    if rows != targets.len() || rows == 0 || cols == 0 {
        return Err(Error::Shape(format!(
            "cross_entropy: {rows}x{cols} logits with {} targets",
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (row, &t) in logits.data().chunks_exact(cols).zip(targets) {
        if t >= cols {
            return Err(Error::Index(format!("target {t} out of range for {cols} classes")));
        }
        total += kernels::log_sum_exp(row) - row[t];
    }
    Ok(total / rows as f64)
}
