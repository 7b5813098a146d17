use rand::Rng;

use super::dense::Dense;
use super::layer::Layer;
use super::ops::{global_avg_pool, global_avg_pool_backward, relu, relu_backward};
use super::tensor::{Param, Shape, Tensor};
use crate::error::Result;

/// Global average pool, then `dense(hidden) -> relu -> dense(classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub hidden: Dense,
    pub output: Dense,
}

pub struct HeadCache {
    input_shape: Shape,
    pooled: Tensor,
    hidden: Tensor,
}

impl MlpHead {
    pub fn new(channels: usize, hidden: usize, classes: usize) -> Self {
        Self {
            hidden: Dense::new(channels, hidden),
            output: Dense::new(hidden, classes),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.hidden.init(rng);
        self.output.init(rng);
        // Start near uniform predictions.
        self.output.weight.data.iter_mut().for_each(|w| *w *= 0.1);
    }
}

impl Layer for MlpHead {
    type Cache = HeadCache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, HeadCache)> {
        let pooled = global_avg_pool(input);
        let hidden = relu(&self.hidden.infer(&pooled)?);
        let logits = self.output.infer(&hidden)?;
        Ok((
            logits,
            HeadCache {
                input_shape: input.shape(),
                pooled,
                hidden,
            },
        ))
    }

    fn backward(&self, cache: &HeadCache, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let d_hidden = self.output.backward(&cache.hidden, grad_output, &mut grads.output)?;
        let d_hidden = relu_backward(&cache.hidden, &d_hidden);
        let d_pooled = self.hidden.backward(&cache.pooled, &d_hidden, &mut grads.hidden)?;
        Ok(global_avg_pool_backward(cache.input_shape, &d_pooled))
    }

    fn params(&self) -> Vec<&Param> {
        let mut ps = self.hidden.params();
        ps.extend(self.output.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.hidden.params_mut();
        ps.extend(self.output.params_mut());
        ps
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(-ln p[label], p - onehot(label))`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = log_total - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}
