//! Parameter-free tensor operations and their gradients.

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient of ReLU given its output.
pub fn relu_backward(output: &Tensor, grad: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad.shape(), data).expect("same shape")
}

/// Concatenates along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::ShapeMismatch("nothing to concatenate".into()))?
        .shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if (s.batch, s.height, s.width) != (first.batch, first.height, first.width) {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {s} with {first}"
            )));
        }
        channels += s.channels;
    }
    let out_shape = first.with_channels(channels);
    let pixels = first.batch * first.height * first.width;
    let mut data = Vec::with_capacity(out_shape.len());
    for px in 0..pixels {
        for p in parts {
            let c = p.shape().channels;
            data.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Inverse of [`concat_channels`].
pub fn split_channels(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let s = x.shape();
    if widths.iter().sum::<usize>() != s.channels {
        return Err(Error::ShapeMismatch(format!(
            "cannot split {} channels into {widths:?}",
            s.channels
        )));
    }
    let pixels = s.batch * s.height * s.width;
    let mut outs: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(pixels * w)).collect();
    for px in x.data().chunks_exact(s.channels) {
        let mut start = 0;
        for (out, &w) in outs.iter_mut().zip(widths) {
            out.extend_from_slice(&px[start..start + w]);
            start += w;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(data, &w)| Tensor::from_vec(s.with_channels(w), data))
        .collect()
}

/// 3x3 average pooling, stride 1, zero padding 1; every window divides by 9.
pub fn avg_pool3(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for b in 0..s.batch {
        for y in 0..s.height {
            for xx in 0..s.width {
                let o = out.offset(b, y, xx, 0);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (iy, ix) = (y as isize + dy, xx as isize + dx);
                        if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize {
                            continue;
                        }
                        let i = x.offset(b, iy as usize, ix as usize, 0);
                        for c in 0..s.channels {
                            out.data_mut()[o + c] += x.data()[i + c] / 9.0;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn avg_pool3_backward(grad: &Tensor) -> Tensor {
    // The pooling operator is symmetric, so its adjoint is itself.
    avg_pool3(grad)
}

/// Mean over height and width: `(B, H, W, C) -> (B, 1, 1, C)`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let area = (s.height * s.width) as f64;
    let mut out = Tensor::zeros(Shape::new(s.batch, 1, 1, s.channels));
    for b in 0..s.batch {
        let item = x.item(b);
        let o = out.item_mut(b);
        for px in item.chunks_exact(s.channels) {
            for (acc, v) in o.iter_mut().zip(px) {
                *acc += v;
            }
        }
        o.iter_mut().for_each(|v| *v /= area);
    }
    out
}

pub fn global_avg_pool_backward(input_shape: Shape, grad: &Tensor) -> Tensor {
    let area = (input_shape.height * input_shape.width) as f64;
    let mut dx = Tensor::zeros(input_shape);
    for b in 0..input_shape.batch {
        let g: Vec<f64> = grad.item(b).iter().map(|v| v / area).collect();
        for px in dx.item_mut(b).chunks_exact_mut(input_shape.channels) {
            px.copy_from_slice(&g);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Shape) -> Tensor {
        Tensor::from_vec(shape, (0..shape.len()).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn concat_then_split_is_identity() {
        let a = seq(Shape::new(2, 3, 3, 2));
        let b = seq(Shape::new(2, 3, 3, 5));
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape().channels, 7);
        assert_eq!(cat.at(1, 2, 1, 3), b.at(1, 2, 1, 1));
        let parts = split_channels(&cat, &[2, 5]).unwrap();
        assert_eq!(parts, vec![a, b]);
    }

    #[test]
    fn global_pool_of_constants() {
        let mut x = Tensor::zeros(Shape::new(1, 4, 4, 3));
        for px in x.data_mut().chunks_exact_mut(3) {
            px.copy_from_slice(&[1.5, -2.0, 0.25]);
        }
        assert_eq!(global_avg_pool(&x).data(), &[1.5, -2.0, 0.25]);
        let single = seq(Shape::new(2, 1, 1, 4));
        assert_eq!(global_avg_pool(&single), single);
    }

    #[test]
    fn avg_pool_is_self_adjoint() {
        // <P x, g> == <x, P g> for the zero-padded mean filter.
        let x = seq(Shape::new(1, 4, 5, 2));
        let g = Tensor::from_vec(
            x.shape(),
            (0..x.shape().len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect(),
        )
        .unwrap();
        let lhs: f64 = avg_pool3(&x).data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(avg_pool3_backward(&g).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
