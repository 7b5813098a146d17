//! Contextual-transformer attention block.
//!
//! ```text
//! static  = key_embed(x)                         3x3 conv
//! qk      = concat[static, x]                    2C channels
//! logits  = attn_expand(relu(attn_reduce(qk)))   two 1x1 convs -> k*k*heads
//! weights = softmax over the k*k neighbourhood, per position and head
//! v       = value_embed(x)                       1x1 conv
//! dynamic = sum_o weights[p, head(c), o] * v[p + o, c]   (zero outside)
//! output  = fuse(concat[static, dynamic])        1x1 conv, C channels
//! ```
//!
//! Attention logits use channel layout `head * k*k + offset`, offsets in
//! row-major order over the window. Value channel `c` reads the weights of
//! head `c * heads / C`.

use rand::Rng;

use super::conv::Conv2d;
use super::layer::Layer;
use super::ops::{concat_channels, relu, relu_backward, split_channels};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CotLayer {
    pub key_embed: Conv2d,
    pub value_embed: Conv2d,
    pub attn_reduce: Conv2d,
    pub attn_expand: Conv2d,
    pub fuse: Conv2d,
    /// Side of the square attention neighbourhood (odd).
    pub kernel: usize,
    pub heads: usize,
}

pub struct CotCache {
    input: Tensor,
    values: Tensor,
    qk: Tensor,
    reduced: Tensor,
    weights: Tensor,
    fused_input: Tensor,
}

impl CotLayer {
    pub fn new(channels: usize, kernel: usize, reduction: usize, heads: usize) -> Result<Self> {
        if channels == 0 || kernel % 2 == 0 || reduction == 0 || heads == 0 || heads > channels {
            return Err(Error::InvalidConfig(format!(
                "CoT layer needs C > 0, odd kernel, reduction > 0 and 1 <= heads <= C \
                 (C={channels}, kernel={kernel}, reduction={reduction}, heads={heads})"
            )));
        }
        let mid = (2 * channels / reduction).max(1);
        Ok(Self {
            key_embed: Conv2d::same(3, channels, channels),
            value_embed: Conv2d::pointwise(channels, channels),
            attn_reduce: Conv2d::pointwise(2 * channels, mid),
            attn_expand: Conv2d::pointwise(mid, kernel * kernel * heads),
            fuse: Conv2d::pointwise(2 * channels, channels),
            kernel,
            heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.key_embed.out_channels()
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.key_embed.init(rng);
        self.value_embed.init(rng);
        self.attn_reduce.init(rng);
        self.attn_expand.init(rng);
        self.fuse.init(rng);
    }

    /// Softmax-normalized attention weights for `input`, exposed for
    /// inspection and testing.
    pub fn attention_weights(&self, input: &Tensor) -> Result<Tensor> {
        let static_ctx = self.key_embed.infer(input)?;
        let qk = concat_channels(&[&static_ctx, input])?;
        let logits = self.attn_expand.infer(&relu(&self.attn_reduce.infer(&qk)?))?;
        Ok(neighbourhood_softmax(&logits, self.kernel * self.kernel))
    }
}

/// Softmax over consecutive groups of `window` channels, max-subtracted.
pub fn neighbourhood_softmax(logits: &Tensor, window: usize) -> Tensor {
    let mut out = logits.clone();
    for group in out.data_mut().chunks_exact_mut(window) {
        let max = group.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in group.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        group.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Gradient of [`neighbourhood_softmax`] given its output.
pub fn neighbourhood_softmax_backward(weights: &Tensor, grad: &Tensor, window: usize) -> Tensor {
    let mut out = grad.clone();
    for (g, w) in out
        .data_mut()
        .chunks_exact_mut(window)
        .zip(weights.data().chunks_exact(window))
    {
        let dot: f64 = g.iter().zip(w).map(|(a, b)| a * b).sum();
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi = wi * (*gi - dot);
        }
    }
    out
}

fn head_map(channels: usize, heads: usize) -> Vec<usize> {
    (0..channels).map(|c| c * heads / channels).collect()
}

/// Offset list `(dy, dx, index)` for a `kernel x kernel` window.
fn offsets(kernel: usize) -> impl Iterator<Item = (isize, isize, usize)> {
    let r = (kernel / 2) as isize;
    (0..kernel * kernel).map(move |o| ((o / kernel) as isize - r, (o % kernel) as isize - r, o))
}

/// Weighted neighbourhood sum of `values`; see the module docs.
pub fn local_aggregate(weights: &Tensor, values: &Tensor, kernel: usize, heads: usize) -> Result<Tensor> {
    let vs = values.shape();
    let window = kernel * kernel;
    weights.expect_shape(vs.with_channels(heads * window), "attention weights")?;
    let c = vs.channels;
    let head = head_map(c, heads);
    let mut out = Tensor::zeros(vs);
    for (dy, dx, o) in offsets(kernel) {
        for b in 0..vs.batch {
            for y in 0..vs.height {
                let ny = y as isize + dy;
                if ny < 0 || ny >= vs.height as isize {
                    continue;
                }
                for x in 0..vs.width {
                    let nx = x as isize + dx;
                    if nx < 0 || nx >= vs.width as isize {
                        continue;
                    }
                    let w = &weights.data()[weights.offset(b, y, x, 0)..][..heads * window];
                    let v_at = values.offset(b, ny as usize, nx as usize, 0);
                    let o_at = out.offset(b, y, x, 0);
                    for ch in 0..c {
                        let wv = w[head[ch] * window + o] * values.data()[v_at + ch];
                        out.data_mut()[o_at + ch] += wv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(d_weights, d_values)`.
pub fn local_aggregate_backward(
    weights: &Tensor,
    values: &Tensor,
    grad: &Tensor,
    kernel: usize,
    heads: usize,
) -> Result<(Tensor, Tensor)> {
    let vs = values.shape();
    grad.expect_shape(vs, "aggregation gradient")?;
    let window = kernel * kernel;
    let c = vs.channels;
    let head = head_map(c, heads);
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_values = Tensor::zeros(vs);
    for (dy, dx, o) in offsets(kernel) {
        for b in 0..vs.batch {
            for y in 0..vs.height {
                let ny = y as isize + dy;
                if ny < 0 || ny >= vs.height as isize {
                    continue;
                }
                for x in 0..vs.width {
                    let nx = x as isize + dx;
                    if nx < 0 || nx >= vs.width as isize {
                        continue;
                    }
                    let w_at = weights.offset(b, y, x, 0);
                    let v_at = values.offset(b, ny as usize, nx as usize, 0);
                    let g_at = grad.offset(b, y, x, 0);
                    for (ch, &hd) in head.iter().enumerate() {
                        let wi = w_at + hd * window + o;
                        let g = grad.data()[g_at + ch];
                        d_weights.data_mut()[wi] += g * values.data()[v_at + ch];
                        d_values.data_mut()[v_at + ch] += weights.data()[wi] * g;
                    }
                }
            }
        }
    }
    Ok((d_weights, d_values))
}

impl Layer for CotLayer {
    type Cache = CotCache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, CotCache)> {
        let c = self.channels();
        if input.shape().channels != c {
            return Err(Error::ShapeMismatch(format!(
                "CoT layer expects {c} channels, got {}",
                input.shape()
            )));
        }
        let window = self.kernel * self.kernel;
        let static_ctx = self.key_embed.infer(input)?;
        let values = self.value_embed.infer(input)?;
        let qk = concat_channels(&[&static_ctx, input])?;
        let reduced = relu(&self.attn_reduce.infer(&qk)?);
        let logits = self.attn_expand.infer(&reduced)?;
        logits.ensure_finite("CoT attention logits")?;
        let weights = neighbourhood_softmax(&logits, window);
        let dynamic = local_aggregate(&weights, &values, self.kernel, self.heads)?;
        let fused_input = concat_channels(&[&static_ctx, &dynamic])?;
        let output = self.fuse.infer(&fused_input)?;
        output.ensure_finite("CoT output")?;
        Ok((
            output,
            CotCache {
                input: input.clone(),
                values,
                qk,
                reduced,
                weights,
                fused_input,
            },
        ))
    }

    fn backward(&self, cache: &CotCache, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let c = self.channels();
        let window = self.kernel * self.kernel;
        let d_fused = self.fuse.backward(&cache.fused_input, grad_output, &mut grads.fuse)?;
        let mut parts = split_channels(&d_fused, &[c, c])?.into_iter();
        let mut d_static = parts.next().expect("two parts");
        let d_dynamic = parts.next().expect("two parts");

        let (d_weights, d_values) = local_aggregate_backward(
            &cache.weights,
            &cache.values,
            &d_dynamic,
            self.kernel,
            self.heads,
        )?;
        let d_logits = neighbourhood_softmax_backward(&cache.weights, &d_weights, window);
        let d_reduced = self
            .attn_expand
            .backward(&cache.reduced, &d_logits, &mut grads.attn_expand)?;
        let d_reduced = relu_backward(&cache.reduced, &d_reduced);
        let d_qk = self
            .attn_reduce
            .backward(&cache.qk, &d_reduced, &mut grads.attn_reduce)?;
        let mut qk_parts = split_channels(&d_qk, &[c, c])?.into_iter();
        d_static.add_assign(&qk_parts.next().expect("two parts"))?;
        let mut dx = qk_parts.next().expect("two parts");

        dx.add_assign(&self.key_embed.backward(&cache.input, &d_static, &mut grads.key_embed)?)?;
        dx.add_assign(&self.value_embed.backward(&cache.input, &d_values, &mut grads.value_embed)?)?;
        dx.ensure_finite("CoT input gradient")?;
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        [
            &self.key_embed,
            &self.value_embed,
            &self.attn_reduce,
            &self.attn_expand,
            &self.fuse,
        ]
        .into_iter()
        .flat_map(|conv| conv.params())
        .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        [
            &mut self.key_embed,
            &mut self.value_embed,
            &mut self.attn_reduce,
            &mut self.attn_expand,
            &mut self.fuse,
        ]
        .into_iter()
        .flat_map(|conv| conv.params_mut())
        .collect()
    }
}
