//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Unknown keys are rejected. A single `seed` drives
//! the split, the model initialization and the training shuffle.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::SplitConfig;
use crate::error::{Error, Result};
use crate::gaf::{Encoder, Encoding};
use crate::nn::model::{parse_kv, parse_num};
use crate::nn::ModelConfig;
use crate::train_eval::{TrainConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub window_len: usize,
    pub stride: usize,
    pub train_fraction: f64,
    pub paa_target: usize,
    /// 0 selects the downsampled length.
    pub n_regularizer: usize,
    pub encoding: Encoding,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        Self {
            dataset_root: PathBuf::from("data/bonn"),
            output_dir: PathBuf::from("out"),
            window_len: split.window_len,
            stride: split.stride,
            train_fraction: split.train_fraction,
            paa_target: 64,
            n_regularizer: 0,
            encoding: Encoding::Gasf,
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

const MODEL_KEYS: [&str; 10] = [
    "stem_channels",
    "local_channels",
    "num_res_units",
    "num_cot_layers",
    "cot_kernel",
    "cot_reduction",
    "cot_heads",
    "inception_branch_widths",
    "mlp_hidden",
    "num_classes",
];

pub fn encoding_name(encoding: Encoding) -> &'static str {
    match encoding {
        Encoding::Gasf => "gasf",
        Encoding::RowTiled => "row_tiled",
    }
}

pub fn parse_encoding(s: &str) -> Result<Encoding> {
    match s.trim() {
        "gasf" => Ok(Encoding::Gasf),
        "row_tiled" => Ok(Encoding::RowTiled),
        other => Err(Error::InvalidConfig(format!("unknown encoding {other:?}"))),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::from_text(&text)
    }

    /// Applies `key=value` or `key = value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset_root" => self.dataset_root = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "window_len" => self.window_len = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "paa_target" => self.paa_target = parse_num(key, value)?,
            "n_regularizer" => self.n_regularizer = parse_num(key, value)?,
            "encoding" => self.encoding = parse_encoding(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "batch_size" => t.batch_size = parse_num(key, value)?,
            "learning_rate" => t.learning_rate = parse_num(key, value)?,
            "optimizer" => t.optimizer = value.parse()?,
            "momentum" => t.momentum = parse_num(key, value)?,
            "beta1" => t.beta1 = parse_num(key, value)?,
            "beta2" => t.beta2 = parse_num(key, value)?,
            "epsilon" => t.epsilon = parse_num(key, value)?,
            "variant" => t.variant = value.parse::<Variant>()?,
            k if MODEL_KEYS.contains(&k) => self.model.set(k, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.split_config().validate()?;
        if self.paa_target == 0 || self.window_len % self.paa_target != 0 {
            return Err(Error::InvalidConfig(format!(
                "window_len {} must be divisible by paa_target {}",
                self.window_len, self.paa_target
            )));
        }
        self.model_config().validate()?;
        self.train_config().validate()
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train_fraction,
            seed: self.seed,
            window_len: self.window_len,
            stride: self.stride,
        }
    }

    pub fn encoder(&self) -> Encoder {
        Encoder {
            paa_target: self.paa_target,
            n_regularizer: (self.n_regularizer > 0).then_some(self.n_regularizer),
            encoding: self.encoding,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone().with_input_size(self.paa_target)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Every key with its resolved value and unit, parseable by
    /// [`RunConfig::from_text`].
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let w = m.inception_branch_widths;
        let rows: Vec<(&str, String, &str)> = vec![
            ("dataset_root", self.dataset_root.display().to_string(), "path"),
            ("output_dir", self.output_dir.display().to_string(), "path"),
            ("seed", self.seed.to_string(), "unsigned integer"),
            ("window_len", self.window_len.to_string(), "samples"),
            ("stride", self.stride.to_string(), "samples"),
            ("train_fraction", self.train_fraction.to_string(), "fraction of records per class"),
            ("paa_target", self.paa_target.to_string(), "samples after PAA = image side in pixels"),
            ("n_regularizer", self.n_regularizer.to_string(), "polar radius divisor, 0 = paa_target"),
            ("encoding", encoding_name(self.encoding).to_string(), "gasf | row_tiled"),
            ("stem_channels", m.stem_channels.to_string(), "channels"),
            ("local_channels", m.local_channels.to_string(), "channels, 0 = stem_channels"),
            ("num_res_units", m.num_res_units.to_string(), "count"),
            ("num_cot_layers", m.num_cot_layers.to_string(), "count"),
            ("cot_kernel", m.cot_kernel.to_string(), "pixels, odd"),
            ("cot_reduction", m.cot_reduction.to_string(), "ratio"),
            ("cot_heads", m.cot_heads.to_string(), "count, 0 = channels / 4"),
            ("inception_branch_widths", format!("{},{},{},{}", w[0], w[1], w[2], w[3]), "channels per branch"),
            ("mlp_hidden", m.mlp_hidden.to_string(), "units"),
            ("num_classes", m.num_classes.to_string(), "count"),
            ("epochs", t.epochs.to_string(), "passes over the train set"),
            ("batch_size", t.batch_size.to_string(), "images"),
            ("learning_rate", t.learning_rate.to_string(), "step size"),
            ("optimizer", t.optimizer.to_string(), "sgd | sgd_momentum | adam"),
            ("momentum", t.momentum.to_string(), "sgd_momentum coefficient"),
            ("beta1", t.beta1.to_string(), "adam first-moment decay"),
            ("beta2", t.beta2.to_string(), "adam second-moment decay"),
            ("epsilon", t.epsilon.to_string(), "adam denominator offset"),
            ("variant", t.variant.to_string(), "full | no_gaf | no_cot | no_ru"),
        ];
        let mut s = String::from("# grcnet run configuration\n");
        for (k, v, unit) in rows {
            s.push_str(&format!("{k} = {v}  # {unit}\n"));
        }
        s
    }

    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::write(&path, e))?;
        Ok(path)
    }
}
