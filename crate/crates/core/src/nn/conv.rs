//! 2-D cross-correlation over NHWC tensors, lowered to GEMM via im2col.

use rand::Rng;

use super::layer::Layer;
use super::linalg::gemm;
use super::tensor::{Param, Shape, Tensor};
use crate::error::{Error, Result};

/// Convolution with kernel layout `(k_h, k_w, c_in, c_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        k_h: usize,
        k_w: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            weight: Param::zeros(&[k_h, k_w, c_in, c_out]),
            bias: Param::zeros(&[c_out]),
            stride: stride.max(1),
            padding,
        }
    }

    /// Square kernel, stride 1, padding that preserves spatial size.
    pub fn same(k: usize, c_in: usize, c_out: usize) -> Self {
        Self::new(k, k, c_in, c_out, 1, k / 2)
    }

    pub fn pointwise(c_in: usize, c_out: usize) -> Self {
        Self::new(1, 1, c_in, c_out, 1, 0)
    }

    /// `(k_h, k_w, c_in, c_out)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = &self.weight.shape;
        (s[0], s[1], s[2], s[3])
    }

    pub fn in_channels(&self) -> usize {
        self.dims().2
    }

    pub fn out_channels(&self) -> usize {
        self.dims().3
    }

    /// Uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let (k_h, k_w, c_in, _) = self.dims();
        let bound = (6.0 / (k_h * k_w * c_in) as f64).sqrt();
        for w in &mut self.weight.data {
            *w = rng.gen_range(-bound..bound);
        }
        self.bias.data.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let (k_h, k_w, c_in, c_out) = self.dims();
        if input.channels != c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {c_in} input channels, got {}",
                input.channels
            )));
        }
        let out = |n: usize, k: usize| -> Option<usize> {
            (n + 2 * self.padding)
                .checked_sub(k)
                .map(|span| span / self.stride + 1)
        };
        match (out(input.height, k_h), out(input.width, k_w)) {
            (Some(h), Some(w)) if h > 0 && w > 0 => {
                Ok(Shape::new(input.batch, h, w, c_out))
            }
            _ => Err(Error::ShapeMismatch(format!(
                "kernel {k_h}x{k_w} with padding {} does not fit input {input}",
                self.padding
            ))),
        }
    }

    fn is_pointwise(&self) -> bool {
        let (k_h, k_w, _, _) = self.dims();
        k_h == 1 && k_w == 1 && self.stride == 1 && self.padding == 0
    }

    /// Fills `cols` (rows = output pixels, cols = `k_h*k_w*c_in`) for item `b`.
    fn im2col(&self, x: &Tensor, b: usize, out: Shape, cols: &mut [f64]) {
        let (k_h, k_w, c_in, _) = self.dims();
        let s = x.shape();
        let row_len = k_h * k_w * c_in;
        let pad = self.padding as isize;
        for oy in 0..out.height {
            for ox in 0..out.width {
                let row = &mut cols[(oy * out.width + ox) * row_len..][..row_len];
                for ky in 0..k_h {
                    let iy = (oy * self.stride + ky) as isize - pad;
                    for kx in 0..k_w {
                        let ix = (ox * self.stride + kx) as isize - pad;
                        let dst = &mut row[(ky * k_w + kx) * c_in..][..c_in];
                        if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize
                        {
                            dst.iter_mut().for_each(|v| *v = 0.0);
                        } else {
                            let src = x.offset(b, iy as usize, ix as usize, 0);
                            dst.copy_from_slice(&x.data()[src..src + c_in]);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back into item `b` of `dx`.
    fn col2im(&self, cols: &[f64], b: usize, out: Shape, dx: &mut Tensor) {
        let (k_h, k_w, c_in, _) = self.dims();
        let s = dx.shape();
        let row_len = k_h * k_w * c_in;
        let pad = self.padding as isize;
        for oy in 0..out.height {
            for ox in 0..out.width {
                let row = &cols[(oy * out.width + ox) * row_len..][..row_len];
                for ky in 0..k_h {
                    let iy = (oy * self.stride + ky) as isize - pad;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for kx in 0..k_w {
                        let ix = (ox * self.stride + kx) as isize - pad;
                        if ix < 0 || ix >= s.width as isize {
                            continue;
                        }
                        let src = &row[(ky * k_w + kx) * c_in..][..c_in];
                        let dst = dx.offset(b, iy as usize, ix as usize, 0);
                        for (d, v) in dx.data_mut()[dst..dst + c_in].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    type Cache = Tensor;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let out_shape = self.output_shape(input.shape())?;
        let (k_h, k_w, c_in, c_out) = self.dims();
        let m = out_shape.height * out_shape.width;
        let k = k_h * k_w * c_in;
        let mut out = Tensor::zeros(out_shape);
        let mut cols = if self.is_pointwise() {
            Vec::new()
        } else {
            vec![0.0; m * k]
        };
        for b in 0..out_shape.batch {
            let lhs: &[f64] = if self.is_pointwise() {
                input.item(b)
            } else {
                self.im2col(input, b, out_shape, &mut cols);
                &cols
            };
            let y = out.item_mut(b);
            gemm(m, k, c_out, lhs, false, &self.weight.data, false, y, false);
            for px in y.chunks_exact_mut(c_out) {
                for (v, bias) in px.iter_mut().zip(&self.bias.data) {
                    *v += bias;
                }
            }
        }
        Ok((out, input.clone()))
    }

    fn backward(&self, input: &Tensor, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        grad_output.expect_shape(out_shape, "conv gradient")?;
        let (k_h, k_w, c_in, c_out) = self.dims();
        let m = out_shape.height * out_shape.width;
        let k = k_h * k_w * c_in;
        let mut dx = Tensor::zeros(input.shape());
        let pointwise = self.is_pointwise();
        let mut cols = if pointwise { Vec::new() } else { vec![0.0; m * k] };
        let mut dcols = if pointwise { Vec::new() } else { vec![0.0; m * k] };
        for b in 0..out_shape.batch {
            let dy = grad_output.item(b);
            for px in dy.chunks_exact(c_out) {
                for (g, d) in grads.bias.data.iter_mut().zip(px) {
                    *g += d;
                }
            }
            if pointwise {
                gemm(k, m, c_out, input.item(b), true, dy, false, &mut grads.weight.data, true);
                gemm(m, c_out, k, dy, false, &self.weight.data, true, dx.item_mut(b), false);
            } else {
                self.im2col(input, b, out_shape, &mut cols);
                gemm(k, m, c_out, &cols, true, dy, false, &mut grads.weight.data, true);
                gemm(m, c_out, k, dy, false, &self.weight.data, true, &mut dcols, false);
                self.col2im(&dcols, b, out_shape, &mut dx);
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-deep loop, independent of im2col.
    fn naive(conv: &Conv2d, x: &Tensor) -> Tensor {
        let out_shape = conv.output_shape(x.shape()).unwrap();
        let (k_h, k_w, c_in, c_out) = conv.dims();
        let mut out = Tensor::zeros(out_shape);
        let s = x.shape();
        for b in 0..s.batch {
            for oy in 0..out_shape.height {
                for ox in 0..out_shape.width {
                    for co in 0..c_out {
                        let mut acc = conv.bias.data[co];
                        for ky in 0..k_h {
                            for kx in 0..k_w {
                                let iy = (oy * conv.stride + ky) as isize - conv.padding as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.padding as isize;
                                if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize {
                                    continue;
                                }
                                for ci in 0..c_in {
                                    acc += x.at(b, iy as usize, ix as usize, ci)
                                        * conv.weight.data[((ky * k_w + kx) * c_in + ci) * c_out + co];
                                }
                            }
                        }
                        let o = out.offset(b, oy, ox, co);
                        out.data_mut()[o] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp_tensor(shape: Shape) -> Tensor {
        let data = (0..shape.len()).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_pointwise_kernel() {
        let mut conv = Conv2d::pointwise(3, 3);
        for c in 0..3 {
            conv.weight.data[c * 3 + c] = 1.0;
        }
        let x = ramp_tensor(Shape::new(2, 4, 5, 3));
        assert_eq!(conv.infer(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_one_hot() {
        let mut conv = Conv2d::same(3, 1, 1);
        conv.weight.data.iter_mut().for_each(|w| *w = 1.0);
        let mut x = Tensor::zeros(Shape::new(1, 3, 3, 1));
        x.data_mut()[4] = 1.0;
        let y = conv.infer(&x).unwrap();
        assert_eq!(y.data(), &[1.0; 9]);
    }

    #[test]
    fn valid_output_size() {
        let conv = Conv2d::new(3, 3, 1, 2, 1, 0);
        let s = conv.output_shape(Shape::new(1, 5, 5, 1)).unwrap();
        assert_eq!((s.height, s.width, s.channels), (3, 3, 2));
        let strided = Conv2d::new(3, 3, 1, 1, 2, 1);
        assert_eq!(strided.output_shape(Shape::new(1, 8, 7, 1)).unwrap().height, 4);
        assert!(Conv2d::new(5, 5, 1, 1, 1, 0)
            .output_shape(Shape::new(1, 3, 3, 1))
            .is_err());
        assert!(conv.output_shape(Shape::new(1, 5, 5, 2)).is_err());
    }

    #[test]
    fn matches_naive_loop() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (2, 1, 0), (3, 1, 0)] {
            let mut conv = Conv2d::new(k, k, 3, 4, stride, pad);
            conv.init(&mut rng);
            conv.bias.data.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            let x = ramp_tensor(Shape::new(2, 6, 5, 3));
            let fast = conv.infer(&x).unwrap();
            let slow = naive(&conv, &x);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv2d::same(3, 1, 2);
        conv.init(&mut rng);
        // A blob well inside an 8x8 canvas, then the same blob one pixel right.
        let mut x = Tensor::zeros(Shape::new(1, 8, 8, 1));
        let mut shifted = x.clone();
        for (y, xx, v) in [(3, 2, 1.0), (3, 3, -0.5), (4, 2, 0.25)] {
            let o = x.offset(0, y, xx, 0);
            x.data_mut()[o] = v;
            let o = shifted.offset(0, y, xx + 1, 0);
            shifted.data_mut()[o] = v;
        }
        let a = conv.infer(&x).unwrap();
        let b = conv.infer(&shifted).unwrap();
        for y in 1..7 {
            for xx in 1..6 {
                for c in 0..2 {
                    assert!((a.at(0, y, xx, c) - b.at(0, y, xx + 1, c)).abs() < 1e-12);
                }
            }
        }
    }
}
