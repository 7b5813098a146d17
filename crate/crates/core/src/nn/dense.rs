use rand::Rng;

use super::layer::Layer;
use super::linalg::gemm;
use super::tensor::{Param, Shape, Tensor};
use crate::error::{Error, Result};

/// Fully connected layer over flattened batch items; output is `(B, 1, 1, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `(in, out)`
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::zeros(&[inputs, outputs]),
            bias: Param::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.inputs() as f64).sqrt();
        for w in &mut self.weight.data {
            *w = rng.gen_range(-bound..bound);
        }
        self.bias.data.iter_mut().for_each(|b| *b = 0.0);
    }

    fn check(&self, input: Shape) -> Result<()> {
        if input.item_len() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} features, got {input}",
                self.inputs()
            )));
        }
        Ok(())
    }
}

impl Layer for Dense {
    type Cache = Tensor;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check(input.shape())?;
        let (b, n_in, n_out) = (input.shape().batch, self.inputs(), self.outputs());
        let mut out = Tensor::zeros(Shape::new(b, 1, 1, n_out));
        gemm(b, n_in, n_out, input.data(), false, &self.weight.data, false, out.data_mut(), false);
        for row in out.data_mut().chunks_exact_mut(n_out) {
            for (v, bias) in row.iter_mut().zip(&self.bias.data) {
                *v += bias;
            }
        }
        Ok((out, input.clone()))
    }

    fn backward(&self, input: &Tensor, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let (b, n_in, n_out) = (input.shape().batch, self.inputs(), self.outputs());
        grad_output.expect_shape(Shape::new(b, 1, 1, n_out), "dense gradient")?;
        gemm(n_in, b, n_out, input.data(), true, grad_output.data(), false, &mut grads.weight.data, true);
        for row in grad_output.data().chunks_exact(n_out) {
            for (g, d) in grads.bias.data.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(input.shape());
        gemm(b, n_out, n_in, grad_output.data(), false, &self.weight.data, true, dx.data_mut(), false);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-channel `scale * x + shift`, a lightweight stand-in for batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAffine {
    pub scale: Param,
    pub shift: Param,
}

impl ChannelAffine {
    /// Identity transform.
    pub fn new(channels: usize) -> Self {
        Self {
            scale: Param::filled(&[channels], 1.0),
            shift: Param::zeros(&[channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

impl Layer for ChannelAffine {
    type Cache = Tensor;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let c = self.channels();
        if input.shape().channels != c {
            return Err(Error::ShapeMismatch(format!(
                "affine expects {c} channels, got {}",
                input.shape()
            )));
        }
        let mut out = input.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for ((v, s), t) in px.iter_mut().zip(&self.scale.data).zip(&self.shift.data) {
                *v = *v * s + t;
            }
        }
        Ok((out, input.clone()))
    }

    fn backward(&self, input: &Tensor, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        grad_output.expect_shape(input.shape(), "affine gradient")?;
        let c = self.channels();
        let mut dx = grad_output.clone();
        for ((dpx, xpx), gpx) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(input.data().chunks_exact(c))
            .zip(grad_output.data().chunks_exact(c))
        {
            for ch in 0..c {
                grads.scale.data[ch] += gpx[ch] * xpx[ch];
                grads.shift.data[ch] += gpx[ch];
                dpx[ch] = gpx[ch] * self.scale.data[ch];
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.scale, &self.shift]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.scale, &mut self.shift]
    }
}
