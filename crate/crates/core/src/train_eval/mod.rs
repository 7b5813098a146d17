//! Training loop, evaluation and the four-variant ablation harness.

pub mod ablation;
pub mod metrics;
pub mod optimizer;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, SignalInstance};
use crate::error::{Error, Result};
use crate::gaf::Encoder;
use crate::nn::{GrcNet, Layer, ModelConfig, Tensor};

pub use ablation::{ablate, variant_model_config, AblationRow, AblationTable};
pub use metrics::{compute_metrics, ClassMetrics, ConfusionMatrix, Metrics};
pub use optimizer::{Optimizer, OptimizerKind, OptimizerSettings};

/// Ablation variants, in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Complete model on Gram-matrix images.
    Full,
    /// Complete model on row-tiled scaled series instead of Gram images.
    NoGaf,
    /// Global (CoT) path removed, local path widened.
    NoCot,
    /// Local (residual) path removed.
    NoRu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoGaf, Variant::NoCot, Variant::NoRu];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGaf => "no_gaf",
            Variant::NoCot => "no_cot",
            Variant::NoRu => "no_ru",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Labeled square single-channel images, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    size: usize,
    pixels: Vec<f64>,
    labels: Vec<ClassLabel>,
}

impl ImageSet {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            pixels: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn push(&mut self, image: &[f64], label: ClassLabel) -> Result<()> {
        if image.len() != self.size * self.size {
            return Err(Error::ShapeMismatch(format!(
                "image of {} values in a {n}x{n} set",
                image.len(),
                n = self.size
            )));
        }
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    pub fn image(&self, index: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.pixels[index * n..(index + 1) * n]
    }

    pub fn class_counts(&self) -> [usize; ClassLabel::COUNT] {
        let mut counts = [0; ClassLabel::COUNT];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Stacks the selected images into a `(B, n, n, 1)` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let n = self.size * self.size;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let shape = crate::nn::Shape::new(indices.len(), self.size, self.size, 1);
        Ok((
            Tensor::from_vec(shape, data)?,
            indices.iter().map(|&i| self.labels[i].index()).collect(),
        ))
    }
}

/// Encodes windows into an [`ImageSet`]. Constant windows cannot be scaled
/// and are skipped; the number skipped is returned alongside.
pub fn encode_instances(instances: &[SignalInstance], encoder: &Encoder) -> Result<(ImageSet, usize)> {
    let mut set = ImageSet::new(encoder.image_size());
    let mut skipped = 0;
    for inst in instances {
        match encoder.encode(&inst.values) {
            Ok(img) => set.push(&img, inst.label)?,
            Err(Error::DegenerateRange) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} constant windows that cannot be min-max scaled");
    }
    Ok((set, skipped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub variant: Variant,
    pub epochs: Vec<EpochRecord>,
    /// Not serialized.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainHistory {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }
}

/// Trains a freshly initialized model and evaluates it on `test_set` after
/// every epoch.
///
/// The loss is the batch mean of softmax cross-entropy. Train accuracy is
/// measured on the forward passes made during the epoch.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &ImageSet,
    test_set: &ImageSet,
) -> Result<(GrcNet, TrainHistory)> {
    train_cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidConfig("train and test sets must be nonempty".into()));
    }
    if let Some(missing) = ClassLabel::ALL
        .into_iter()
        .find(|l| train_set.class_counts()[l.index()] == 0)
    {
        return Err(Error::EmptyClass(missing));
    }
    let mut model = GrcNet::new(model_cfg)?;
    let started = Instant::now();
    let mut optimizer = Optimizer::new(train_cfg.optimizer_settings());
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        variant: train_cfg.variant,
        epochs: Vec::with_capacity(train_cfg.epochs),
        wall_clock_seconds: 0.0,
    };

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(train_cfg.batch_size) {
            let (batch, labels) = train_set.batch(chunk)?;
            let (loss, mut grads, predictions) = match model.loss_and_gradients(&batch, &labels) {
                Ok(step) => step,
                Err(Error::NonFinite(_)) => {
                    loss_sum = f64::NAN;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss;
            correct += predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
            if !loss.is_finite() {
                break;
            }
            grads.scale(1.0 / chunk.len() as f64);
            let grad_params = grads.params();
            optimizer.step(model.params_mut(), grad_params);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            history.wall_clock_seconds = started.elapsed().as_secs_f64();
            return Err(Error::DivergenceDetected {
                epoch,
                history: Box::new(history),
            });
        }
        let test_accuracy = match evaluate(&model, test_set) {
            Ok(m) => m.accuracy,
            Err(Error::NonFinite(_)) => {
                history.wall_clock_seconds = started.elapsed().as_secs_f64();
                return Err(Error::DivergenceDetected {
                    epoch,
                    history: Box::new(history),
                });
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            test_accuracy,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4}, train acc {:.4}, test acc {:.4}",
            train_cfg.epochs,
            record.train_loss,
            record.train_accuracy,
            record.test_accuracy
        );
        history.epochs.push(record);
    }
    history.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((model, history))
}

/// Confusion matrix over `set` using argmax predictions, plus derived metrics.
pub fn evaluate(model: &GrcNet, set: &ImageSet) -> Result<Metrics> {
    if set.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate on an empty set".into()));
    }
    let mut confusion = ConfusionMatrix::new(ClassLabel::COUNT);
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(32) {
        let (batch, labels) = set.batch(chunk)?;
        for (p, t) in model.predict(&batch)?.into_iter().zip(labels) {
            confusion.record(t, p);
        }
    }
    compute_metrics(&confusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_set(size: usize, per_class: usize) -> ImageSet {
        let mut set = ImageSet::new(size);
        for label in ClassLabel::ALL {
            let v = label.index() as f64 / 2.0 - 1.0;
            for k in 0..per_class {
                let img: Vec<f64> = (0..size * size).map(|i| v + 0.01 * ((i + k) % 3) as f64).collect();
                set.push(&img, label).unwrap();
            }
        }
        set
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            stem_channels: 4,
            inception_branch_widths: [2, 2, 2, 2],
            mlp_hidden: 8,
            ..ModelConfig::default()
        }
        .with_input_size(8)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn one_epoch_gives_one_record() {
        let set = constant_set(8, 2);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (_, history) = train(&tiny_model(), &cfg, &set, &set).unwrap();
        assert_eq!(history.epochs.len(), 1);
        assert_eq!(history.epochs[0].epoch, 1);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let set = constant_set(8, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&tiny_model(), &cfg, &set, &set).unwrap();
        let initial = GrcNet::new(&tiny_model()).unwrap();
        let bits = |m: &GrcNet| {
            m.params()
                .iter()
                .flat_map(|p| p.data.iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&trained), bits(&initial));
    }

    #[test]
    fn training_is_deterministic() {
        let set = constant_set(8, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 7,
            ..TrainConfig::default()
        };
        let (a, ha) = train(&tiny_model(), &cfg, &set, &set).unwrap();
        let (b, hb) = train(&tiny_model(), &cfg, &set, &set).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.to_json(), hb.to_json());
    }

    #[test]
    fn missing_class_is_rejected() {
        let mut set = ImageSet::new(8);
        set.push(&[0.0; 64], ClassLabel::Z).unwrap();
        let err = train(&tiny_model(), &TrainConfig::default(), &set, &set).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(ClassLabel::O)));
    }

    #[test]
    fn divergence_is_reported_with_history() {
        let set = constant_set(8, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 1e200,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        match train(&tiny_model(), &cfg, &set, &set) {
            Err(Error::DivergenceDetected { history, .. }) => {
                assert!(history.epochs.len() < 3);
            }
            other => panic!("expected divergence, got {:?}", other.map(|(_, h)| h)),
        }
    }
}
