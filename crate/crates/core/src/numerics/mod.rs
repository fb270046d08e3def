//! Dense `f64` tensors, reverse-mode autodiff, losses and Adam.

mod adam;
mod graph;
pub(crate) mod kernels;
mod loss;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{Gradients, Graph, Var};
pub use kernels::argmax;
pub use loss::{cross_entropy, softmax, softmax_slice};
pub use tensor::Tensor;

/// Anything that owns named trainable tensors.
///
/// Both methods must list parameters in the same, stable order; checkpoints
/// and the optimizer rely on it.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_params_mut().into_iter().map(|(_, t)| t).collect()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Prefixes child parameter names with `scope.`.
pub(crate) fn scoped<T>(scope: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items.into_iter().map(|(n, t)| (format!("{scope}.{n}"), t)).collect()
}
