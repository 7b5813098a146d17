use super::tensor::{Param, Tensor};
use crate::error::Result;

/// A differentiable block with owned parameters.
///
/// Gradients are accumulated into a value of the layer's own type whose
/// parameters act as gradient buffers (see [`Layer::zeros_like`]).
pub trait Layer: Clone {
    /// Whatever the backward pass needs from the forward pass.
    type Cache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, Self::Cache)>;

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    fn backward(&self, cache: &Self::Cache, grad_output: &Tensor, grads: &mut Self)
        -> Result<Tensor>;

    /// Parameters in declaration order.
    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Structural copy with every parameter zeroed.
    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for p in g.params_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        g
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
