//! The full classifier: channel-augment stem, parallel local (residual) and
//! global (CoT) paths, inception aggregation and an MLP head.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conv::Conv2d;
use super::cot::{CotCache, CotLayer};
use super::head::{softmax_cross_entropy, HeadCache, MlpHead};
use super::inception::{InceptionBlock, InceptionCache};
use super::layer::Layer;
use super::ops::{concat_channels, relu, relu_backward, split_channels};
use super::residual::{ResidualCache, ResidualUnit};
use super::tensor::{Param, Shape, Tensor};
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// Width of the channel-augment stem.
    pub stem_channels: usize,
    /// Width of the residual path; 0 means "same as the stem".
    pub local_channels: usize,
    pub num_res_units: usize,
    pub num_cot_layers: usize,
    pub cot_kernel: usize,
    pub cot_reduction: usize,
    /// Attention head channels; 0 means `max(stem_channels / 4, 1)`.
    pub cot_heads: usize,
    pub inception_branch_widths: [usize; 4],
    pub mlp_hidden: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_height: 64,
            input_width: 64,
            input_channels: 1,
            stem_channels: 16,
            local_channels: 0,
            num_res_units: 2,
            num_cot_layers: 1,
            cot_kernel: 3,
            cot_reduction: 4,
            cot_heads: 0,
            inception_branch_widths: [8, 8, 8, 8],
            mlp_hidden: 64,
            num_classes: ClassLabel::COUNT,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_input_size(self, size: usize) -> Self {
        Self {
            input_height: size,
            input_width: size,
            ..self
        }
    }

    pub fn local_width(&self) -> usize {
        if self.local_channels == 0 {
            self.stem_channels
        } else {
            self.local_channels
        }
    }

    pub fn heads(&self) -> usize {
        if self.cot_heads == 0 {
            (self.stem_channels / 4).max(1)
        } else {
            self.cot_heads
        }
    }

    /// Channels entering the inception block.
    pub fn feature_channels(&self) -> usize {
        let local = if self.num_res_units > 0 { self.local_width() } else { 0 };
        let global = if self.num_cot_layers > 0 { self.stem_channels } else { 0 };
        local + global
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.input_height, self.input_width, self.input_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes != ClassLabel::COUNT {
            return bad(format!("num_classes must be 5, got {}", self.num_classes));
        }
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return bad("input dimensions must be positive".into());
        }
        if self.stem_channels == 0 || self.mlp_hidden == 0 {
            return bad("stem_channels and mlp_hidden must be positive".into());
        }
        if self.inception_branch_widths.contains(&0) {
            return bad("inception branch widths must be positive".into());
        }
        if self.num_res_units == 0 && self.num_cot_layers == 0 {
            return bad("at least one of num_res_units and num_cot_layers must be positive".into());
        }
        if self.num_cot_layers > 0 {
            if self.cot_kernel % 2 == 0 || self.cot_reduction == 0 {
                return bad("cot_kernel must be odd and cot_reduction positive".into());
            }
            if self.heads() > self.stem_channels {
                return bad(format!(
                    "cot_heads {} exceeds stem_channels {}",
                    self.heads(),
                    self.stem_channels
                ));
            }
        }
        Ok(())
    }

    /// Parameter count of the network this config builds.
    pub fn param_count(&self) -> Result<usize> {
        Ok(GrcNet::zeros(self)?.param_count())
    }

    /// Flat `key = value` lines, in a fixed order.
    pub fn to_kv(&self) -> String {
        let w = self.inception_branch_widths;
        let mut s = String::new();
        for (k, v) in [
            ("input_height", self.input_height.to_string()),
            ("input_width", self.input_width.to_string()),
            ("input_channels", self.input_channels.to_string()),
            ("stem_channels", self.stem_channels.to_string()),
            ("local_channels", self.local_channels.to_string()),
            ("num_res_units", self.num_res_units.to_string()),
            ("num_cot_layers", self.num_cot_layers.to_string()),
            ("cot_kernel", self.cot_kernel.to_string()),
            ("cot_reduction", self.cot_reduction.to_string()),
            ("cot_heads", self.cot_heads.to_string()),
            (
                "inception_branch_widths",
                format!("{},{},{},{}", w[0], w[1], w[2], w[3]),
            ),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`ModelConfig::to_kv`]. Missing keys keep their
    /// defaults; unknown keys are an error.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in parse_kv(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual form. Returns an error for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input_height" => self.input_height = parse_num(key, value)?,
            "input_width" => self.input_width = parse_num(key, value)?,
            "input_channels" => self.input_channels = parse_num(key, value)?,
            "stem_channels" => self.stem_channels = parse_num(key, value)?,
            "local_channels" => self.local_channels = parse_num(key, value)?,
            "num_res_units" => self.num_res_units = parse_num(key, value)?,
            "num_cot_layers" => self.num_cot_layers = parse_num(key, value)?,
            "cot_kernel" => self.cot_kernel = parse_num(key, value)?,
            "cot_reduction" => self.cot_reduction = parse_num(key, value)?,
            "cot_heads" => self.cot_heads = parse_num(key, value)?,
            "inception_branch_widths" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse_num(key, p))
                    .collect::<Result<_>>()?;
                self.inception_branch_widths = parts.try_into().map_err(|_| {
                    Error::InvalidConfig(format!("{key} needs exactly four widths"))
                })?;
            }
            "mlp_hidden" => self.mlp_hidden = parse_num(key, value)?,
            "num_classes" => self.num_classes = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub(crate) fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrcNet {
    config: ModelConfig,
    pub stem: Conv2d,
    pub res_units: Vec<ResidualUnit>,
    pub cot_layers: Vec<CotLayer>,
    pub inception: InceptionBlock,
    pub head: MlpHead,
}

pub struct GrcCache {
    input: Tensor,
    stem_out: Tensor,
    res: Vec<ResidualCache>,
    cot: Vec<CotCache>,
    inception: InceptionCache,
    head: HeadCache,
}

/// Parameter gradients, laid out exactly like a [`GrcNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(GrcNet);

impl Gradients {
    pub fn zeros_for(model: &GrcNet) -> Self {
        Self(model.zeros_like())
    }

    pub fn params(&self) -> Vec<&Param> {
        self.0.params()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.params_mut().into_iter().zip(other.0.params()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.0.params_mut() {
            p.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.data.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}

impl GrcNet {
    /// Builds the network with every parameter zero (affine scales are one).
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.stem_channels;
        let local = config.local_width();
        let res_units = (0..config.num_res_units)
            .map(|i| ResidualUnit::new(if i == 0 { c } else { local }, local))
            .collect();
        let cot_layers = (0..config.num_cot_layers)
            .map(|_| CotLayer::new(c, config.cot_kernel, config.cot_reduction, config.heads()))
            .collect::<Result<_>>()?;
        let inception =
            InceptionBlock::new(config.feature_channels(), config.inception_branch_widths)?;
        let head = MlpHead::new(inception.out_channels(), config.mlp_hidden, config.num_classes);
        Ok(Self {
            config: config.clone(),
            stem: Conv2d::same(3, config.input_channels, c),
            res_units,
            cot_layers,
            inception,
            head,
        })
    }

    /// Seeded fan-in uniform initialization from `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        model.stem.init(&mut rng);
        model.res_units.iter_mut().for_each(|u| u.init(&mut rng));
        model.cot_layers.iter_mut().for_each(|l| l.init(&mut rng));
        model.inception.init(&mut rng);
        model.head.init(&mut rng);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Logits `(B, 1, 1, num_classes)`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.infer(batch)
    }

    /// Class index with the highest logit, per batch item.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        Ok(logits
            .data()
            .chunks_exact(self.config.num_classes)
            .map(argmax)
            .collect())
    }

    /// Summed cross-entropy over the batch and its summed gradients.
    ///
    /// Items are processed one at a time and accumulated in batch order.
    pub fn loss_and_gradients(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Gradients, Vec<usize>)> {
        let shape = batch.shape();
        if labels.len() != shape.batch {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a batch of {}",
                labels.len(),
                shape.batch
            )));
        }
        let mut total = Gradients::zeros_for(self);
        let mut loss = 0.0;
        let mut predictions = Vec::with_capacity(labels.len());
        for (b, &label) in labels.iter().enumerate() {
            if label >= self.config.num_classes {
                return Err(Error::ShapeMismatch(format!("label {label} out of range")));
            }
            let item = batch.select(b);
            let (logits, cache) = self.forward_cached(&item)?;
            let (l, grad) = softmax_cross_entropy(logits.data(), label);
            loss += l;
            predictions.push(argmax(logits.data()));
            let grad = Tensor::from_vec(logits.shape(), grad)?;
            total.add_assign(&self.backward_cached(&cache, &grad)?);
        }
        Ok((loss, total, predictions))
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, GrcCache)> {
        Layer::forward(self, input)
    }

    pub fn backward_cached(&self, cache: &GrcCache, grad_logits: &Tensor) -> Result<Gradients> {
        let mut grads = Gradients::zeros_for(self);
        Layer::backward(self, cache, grad_logits, &mut grads.0)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        Ok(grads)
    }

    /// Applies `update(param, grad)` to every parameter in declaration order.
    pub fn apply<F: FnMut(usize, &mut Param, &Param)>(&mut self, grads: &Gradients, mut update: F) {
        for (i, (p, g)) in self.params_mut().into_iter().zip(grads.params()).enumerate() {
            update(i, p, g);
        }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

impl Layer for GrcNet {
    type Cache = GrcCache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, GrcCache)> {
        let s = input.shape();
        let cfg = &self.config;
        if (s.height, s.width, s.channels) != (cfg.input_height, cfg.input_width, cfg.input_channels) {
            return Err(Error::ShapeMismatch(format!(
                "model expects {}x{}x{} inputs, got {s}",
                cfg.input_height, cfg.input_width, cfg.input_channels
            )));
        }
        let stem_out = relu(&self.stem.infer(input)?);

        let mut res = Vec::with_capacity(self.res_units.len());
        let mut local = None;
        for unit in &self.res_units {
            let (y, c) = unit.forward(local.as_ref().unwrap_or(&stem_out))?;
            res.push(c);
            local = Some(y);
        }
        let mut cot = Vec::with_capacity(self.cot_layers.len());
        let mut global = None;
        for layer in &self.cot_layers {
            let (y, c) = layer.forward(global.as_ref().unwrap_or(&stem_out))?;
            cot.push(c);
            global = Some(y);
        }
        let features = match (&local, &global) {
            (Some(l), Some(g)) => concat_channels(&[l, g])?,
            (Some(l), None) => l.clone(),
            (None, Some(g)) => g.clone(),
            (None, None) => unreachable!("validated config has at least one path"),
        };
        let (aggregated, inception) = self.inception.forward(&features)?;
        let (logits, head) = self.head.forward(&aggregated)?;
        logits.ensure_finite("logits")?;
        Ok((
            logits,
            GrcCache {
                input: input.clone(),
                stem_out,
                res,
                cot,
                inception,
                head,
            },
        ))
    }

    fn backward(&self, cache: &GrcCache, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let d_agg = self.head.backward(&cache.head, grad_output, &mut grads.head)?;
        let d_feat = self
            .inception
            .backward(&cache.inception, &d_agg, &mut grads.inception)?;
        let has_local = !self.res_units.is_empty();
        let has_global = !self.cot_layers.is_empty();
        let (d_local, d_global) = match (has_local, has_global) {
            (true, true) => {
                let mut parts = split_channels(
                    &d_feat,
                    &[self.config.local_width(), self.config.stem_channels],
                )?
                .into_iter();
                (parts.next(), parts.next())
            }
            (true, false) => (Some(d_feat), None),
            (false, _) => (None, Some(d_feat)),
        };

        let mut d_stem = Tensor::zeros(cache.stem_out.shape());
        if let Some(mut g) = d_local {
            for (i, unit) in self.res_units.iter().enumerate().rev() {
                g = unit.backward(&cache.res[i], &g, &mut grads.res_units[i])?;
            }
            d_stem.add_assign(&g)?;
        }
        if let Some(mut g) = d_global {
            for (i, layer) in self.cot_layers.iter().enumerate().rev() {
                g = layer.backward(&cache.cot[i], &g, &mut grads.cot_layers[i])?;
            }
            d_stem.add_assign(&g)?;
        }
        let d_stem = relu_backward(&cache.stem_out, &d_stem);
        self.stem.backward(&cache.input, &d_stem, &mut grads.stem)
    }

    fn params(&self) -> Vec<&Param> {
        let mut ps = self.stem.params();
        for u in &self.res_units {
            ps.extend(u.params());
        }
        for l in &self.cot_layers {
            ps.extend(l.params());
        }
        ps.extend(self.inception.params());
        ps.extend(self.head.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.stem.params_mut();
        for u in &mut self.res_units {
            ps.extend(u.params_mut());
        }
        for l in &mut self.cot_layers {
            ps.extend(l.params_mut());
        }
        ps.extend(self.inception.params_mut());
        ps.extend(self.head.params_mut());
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            stem_channels: 4,
            inception_branch_widths: [2, 2, 2, 2],
            mlp_hidden: 8,
            seed: 3,
            ..ModelConfig::default()
        }
        .with_input_size(8)
    }

    fn random_batch(cfg: &ModelConfig, batch: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = cfg.input_shape(batch);
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig {
            inception_branch_widths: [1, 2, 3, 4],
            seed: 99,
            ..tiny()
        };
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(ModelConfig::from_kv("bogus = 1").is_err());
        assert!(ModelConfig::from_kv("stem_channels = x").is_err());
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(GrcNet::new(&ModelConfig { num_classes: 4, ..tiny() }).is_err());
        assert!(GrcNet::new(&ModelConfig {
            num_res_units: 0,
            num_cot_layers: 0,
            ..tiny()
        })
        .is_err());
    }

    #[test]
    fn logits_have_one_row_per_item() {
        let cfg = tiny();
        let model = GrcNet::new(&cfg).unwrap();
        let logits = model.forward(&random_batch(&cfg, 3, 1)).unwrap();
        assert_eq!(logits.shape(), Shape::new(3, 1, 1, 5));
        assert!(model.forward(&random_batch(&ModelConfig::default().with_input_size(4), 1, 1)).is_err());
    }

    #[test]
    fn batch_permutation_permutes_logits() {
        let cfg = tiny();
        let model = GrcNet::new(&cfg).unwrap();
        let batch = random_batch(&cfg, 3, 2);
        let items: Vec<Tensor> = (0..3).map(|b| batch.select(b)).collect();
        let permuted = Tensor::stack(&[items[2].clone(), items[0].clone(), items[1].clone()]).unwrap();
        let a = model.forward(&batch).unwrap();
        let b = model.forward(&permuted).unwrap();
        assert_eq!(a.item(0), b.item(1));
        assert_eq!(a.item(1), b.item(2));
        assert_eq!(a.item(2), b.item(0));
    }

    #[test]
    fn seeded_models_are_bit_identical() {
        let cfg = tiny();
        let batch = random_batch(&cfg, 2, 5);
        let a = GrcNet::new(&cfg).unwrap().forward(&batch).unwrap();
        let b = GrcNet::new(&cfg).unwrap().forward(&batch).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicated_item_doubles_gradient() {
        let cfg = tiny();
        let model = GrcNet::new(&cfg).unwrap();
        let one = random_batch(&cfg, 1, 6);
        let two = Tensor::stack(&[one.clone(), one.clone()]).unwrap();
        let (l1, g1, _) = model.loss_and_gradients(&one, &[2]).unwrap();
        let (l2, g2, _) = model.loss_and_gradients(&two, &[2, 2]).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.params().iter().zip(g2.params()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn ablated_topologies_build() {
        for (res, cot) in [(0, 1), (2, 0), (1, 2)] {
            let cfg = ModelConfig {
                num_res_units: res,
                num_cot_layers: cot,
                ..tiny()
            };
            let model = GrcNet::new(&cfg).unwrap();
            let batch = random_batch(&cfg, 1, 7);
            let (_, g, _) = model.loss_and_gradients(&batch, &[0]).unwrap();
            assert!(g.is_finite());
        }
    }
}
