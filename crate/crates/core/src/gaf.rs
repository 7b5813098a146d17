//! Gramian Angular Summation Field encoding.
//!
//! A window is min-max scaled into `[-1, 1]`, each value is read as the
//! cosine of an angle `theta_i = arccos(s_i)`, and the image is the matrix of
//! `cos(theta_i + theta_j)`. The production encoder never calls `acos`/`cos`:
//! it uses the equivalent penalized inner product
//! `x*y - sqrt(1 - x^2) * sqrt(1 - y^2)`.

use crate::error::{Error, Result};

/// Round-off allowance when checking that scaled values lie in `[-1, 1]`.
pub const RANGE_TOLERANCE: f64 = 1e-12;

fn clamp_unit(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + RANGE_TOLERANCE {
        return Err(Error::Domain(x));
    }
    Ok(x.clamp(-1.0, 1.0))
}

/// A series with every value in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledSeries(Vec<f64>);

impl ScaledSeries {
    /// Values within [`RANGE_TOLERANCE`] of the unit interval are clamped;
    /// anything further out is a [`Error::Domain`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(clamp_unit)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Polar form of a scaled series: angles `arccos(s_i)` and radii `t_i / N`
/// with 1-based timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarSeries {
    pub angles: Vec<f64>,
    pub radii: Vec<f64>,
    pub n_regularizer: usize,
}

/// Square, symmetric image with entries in `[-1, 1]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GafImage {
    size: usize,
    data: Vec<f64>,
}

impl GafImage {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.get(i, i)).collect()
    }
}

/// Min-max scaling onto `[-1, 1]`:
/// `s'_i = ((s_i - max) + (s_i - min)) / (max - min)`.
///
/// The minimum maps to exactly `-1` and the maximum to exactly `+1`.
pub fn min_max_scale(values: &[f64]) -> Result<ScaledSeries> {
    if values.is_empty() {
        return Err(Error::ShapeMismatch("cannot scale an empty window".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("window samples".into()));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    if range == 0.0 || !range.is_finite() {
        return Err(Error::DegenerateRange);
    }
    ScaledSeries::new(
        values
            .iter()
            .map(|&s| ((s - max) + (s - min)) / range)
            .collect(),
    )
}

pub fn to_polar(series: &ScaledSeries, n_regularizer: usize) -> Result<PolarSeries> {
    if n_regularizer < series.len() || n_regularizer == 0 {
        return Err(Error::InvalidConfig(format!(
            "n_regularizer {} must be at least the series length {}",
            n_regularizer,
            series.len()
        )));
    }
    let n = n_regularizer as f64;
    Ok(PolarSeries {
        angles: series.values().iter().map(|s| s.acos()).collect(),
        radii: (1..=series.len()).map(|t| t as f64 / n).collect(),
        n_regularizer,
    })
}

/// `x*y - sqrt(1-x^2)*sqrt(1-y^2)`, which equals `cos(arccos x + arccos y)`.
pub fn penalized_inner(x: f64, y: f64) -> Result<f64> {
    let x = clamp_unit(x)?;
    let y = clamp_unit(y)?;
    Ok(inner_unchecked(x, y, complement(x), complement(y)))
}

#[inline]
fn complement(x: f64) -> f64 {
    (1.0 - x * x).max(0.0).sqrt()
}

#[inline]
fn inner_unchecked(x: f64, y: f64, cx: f64, cy: f64) -> f64 {
    (x * y - cx * cy).clamp(-1.0, 1.0)
}

/// Gram matrix of the penalized inner product over all pairs.
pub fn gasf(series: &ScaledSeries) -> GafImage {
    let s = series.values();
    let n = s.len();
    let comp: Vec<f64> = s.iter().map(|&x| complement(x)).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = inner_unchecked(s[i], s[j], comp[i], comp[j]);
            data[i * n + j] = g;
            data[j * n + i] = g;
        }
    }
    GafImage { size: n, data }
}

/// Piecewise aggregate approximation: block means over `len / target_len`
/// contiguous samples.
pub fn paa_downsample(series: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let len = series.len();
    if target_len == 0 || target_len > len || len % target_len != 0 {
        return Err(Error::IndivisibleLength {
            len,
            target: target_len,
        });
    }
    let block = len / target_len;
    if block == 1 {
        return Ok(series.to_vec());
    }
    Ok(series
        .chunks_exact(block)
        .map(|c| c.iter().sum::<f64>() / block as f64)
        .collect())
}

/// Recovers `|s'_i|` from the diagonal, using `G_ii = 2 s_i^2 - 1`.
pub fn diag_reconstruct(image: &GafImage) -> Vec<f64> {
    image
        .diagonal()
        .into_iter()
        .map(|g| ((g + 1.0) / 2.0).max(0.0).sqrt())
        .collect()
}

/// Image representation fed to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// Gramian angular summation field.
    Gasf,
    /// The scaled series repeated as every row; no Gram transform.
    RowTiled,
}

/// Window-to-image pipeline: PAA downsample, min-max scale, encode.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub paa_target: usize,
    /// Polar radius regularizer; `None` uses the downsampled length.
    pub n_regularizer: Option<usize>,
    pub encoding: Encoding,
}

impl Encoder {
    pub fn gasf(paa_target: usize) -> Self {
        Self {
            paa_target,
            n_regularizer: None,
            encoding: Encoding::Gasf,
        }
    }

    pub fn image_size(&self) -> usize {
        self.paa_target
    }

    pub fn scale(&self, window: &[f64]) -> Result<ScaledSeries> {
        min_max_scale(&paa_downsample(window, self.paa_target)?)
    }

    /// Encodes one window into a row-major `paa_target x paa_target` image.
    pub fn encode(&self, window: &[f64]) -> Result<Vec<f64>> {
        let scaled = self.scale(window)?;
        if let Some(n) = self.n_regularizer {
            // Radii are not used by the image; this only validates N.
            to_polar(&scaled, n)?;
        }
        Ok(match self.encoding {
            Encoding::Gasf => gasf(&scaled).into_data(),
            Encoding::RowTiled => row_tile(&scaled),
        })
    }
}

/// Stacks the scaled series as identical rows of a square image.
pub fn row_tile(series: &ScaledSeries) -> Vec<f64> {
    let n = series.len();
    let mut out = Vec::with_capacity(n * n);
    for _ in 0..n {
        out.extend_from_slice(series.values());
    }
    out
}
