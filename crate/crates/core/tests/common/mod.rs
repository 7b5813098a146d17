//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use grcnet::nn::{Layer, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Overwrites every parameter, biases and affine terms included, so no
/// gradient path is trivially zero.
pub fn randomize<L: Layer>(layer: &mut L, scale: f64, rng: &mut ChaCha8Rng) {
    for p in layer.params_mut() {
        for v in p.data.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl GradReport {
    fn note(&mut self, err: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        if err > self.worst {
            self.worst = err;
            self.worst_at = at();
        }
    }
}

/// Central finite differences of `loss = sum(out * probe)` against the
/// analytic backward pass, for every parameter and every input element.
pub fn check_layer<L: Layer>(layer: &L, input: &Tensor, step: f64, floor: f64, seed: u64) -> GradReport {
    let mut r = rng(seed);
    let (out, cache) = layer.forward(input).unwrap();
    let probe = random_tensor(out.shape(), &mut r);
    let loss = |l: &L, x: &Tensor| -> f64 {
        let y = l.infer(x).unwrap();
        y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let mut grads = layer.zeros_like();
    let dx = layer.backward(&cache, &probe, &mut grads).unwrap();

    let mut report = GradReport::default();
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|p| p.data.clone()).collect();
    let mut probe_layer = layer.clone();
    for (pi, a_param) in analytic.iter().enumerate() {
        for (i, &a) in a_param.iter().enumerate() {
            let orig = probe_layer.params()[pi].data[i];
            probe_layer.params_mut()[pi].data[i] = orig + step;
            let up = loss(&probe_layer, input);
            probe_layer.params_mut()[pi].data[i] = orig - step;
            let down = loss(&probe_layer, input);
            probe_layer.params_mut()[pi].data[i] = orig;
            let n = (up - down) / (2.0 * step);
            report.note(rel_err(a, n, floor), || format!("param {pi}[{i}]: analytic {a}, numeric {n}"));
        }
    }
    let mut x = input.clone();
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let up = loss(layer, &x);
        x.data_mut()[i] = orig - step;
        let down = loss(layer, &x);
        x.data_mut()[i] = orig;
        let n = (up - down) / (2.0 * step);
        let a = dx.data()[i];
        report.note(rel_err(a, n, floor), || format!("input[{i}]: analytic {a}, numeric {n}"));
    }
    report
}

/// Per-position loop over the neighbourhood, written independently of the
/// library's offset-major implementation.
pub fn naive_local_aggregate(weights: &Tensor, values: &Tensor, kernel: usize, heads: usize) -> Tensor {
    let s = values.shape();
    let r = (kernel / 2) as isize;
    let window = kernel * kernel;
    let mut out = Tensor::zeros(s);
    for b in 0..s.batch {
        for y in 0..s.height {
            for x in 0..s.width {
                for c in 0..s.channels {
                    let head = c * heads / s.channels;
                    let mut acc = 0.0;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let ny = y as isize + ky as isize - r;
                            let nx = x as isize + kx as isize - r;
                            if ny < 0 || nx < 0 || ny >= s.height as isize || nx >= s.width as isize {
                                continue;
                            }
                            let w = weights.at(b, y, x, head * window + ky * kernel + kx);
                            acc += w * values.at(b, ny as usize, nx as usize, c);
                        }
                    }
                    let o = out.offset(b, y, x, c);
                    out.data_mut()[o] = acc;
                }
            }
        }
    }
    out
}

/// Min-max scaling written directly from its definition.
pub fn scale_oracle(series: &[f64]) -> Vec<f64> {
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    series
        .iter()
        .map(|&s| (((s - max) + (s - min)) / (max - min)).clamp(-1.0, 1.0))
        .collect()
}

/// Gram matrix via angles: `cos(acos(x_i) + acos(x_j))`.
pub fn trig_gasf(scaled: &[f64]) -> Vec<f64> {
    let n = scaled.len();
    let theta: Vec<f64> = scaled.iter().map(|s| s.acos()).collect();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = (theta[i] + theta[j]).cos();
        }
    }
    g
}

pub fn random_series(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-100.0..100.0)).collect()
}
