use serde::Serialize;

use super::{encode_instances, evaluate, train, Metrics, TrainConfig, TrainHistory, Variant};
use crate::dataset::SignalInstance;
use crate::error::{Error, Result};
use crate::gaf::{Encoder, Encoding};
use crate::nn::{Layer, ModelConfig};

/// Model configuration for an ablation variant.
///
/// `no_cot` uses the residual-path width whose parameter count is closest
/// to the full model's.
pub fn variant_model_config(base: &ModelConfig, variant: Variant) -> Result<ModelConfig> {
    base.validate()?;
    match variant {
        Variant::Full | Variant::NoGaf => Ok(base.clone()),
        Variant::NoRu => {
            if base.num_cot_layers == 0 {
                return Err(Error::InvalidConfig(
                    "no_ru ablation needs at least one CoT layer".into(),
                ));
            }
            Ok(ModelConfig {
                num_res_units: 0,
                ..base.clone()
            })
        }
        Variant::NoCot => {
            let target = base.param_count()? as i64;
            let candidate = |width: usize| ModelConfig {
                num_cot_layers: 0,
                num_res_units: base.num_res_units.max(1),
                local_channels: width,
                ..base.clone()
            };
            let mut best = candidate(base.local_width());
            let mut best_gap = (best.param_count()? as i64 - target).abs();
            for width in 1..=4 * base.stem_channels.max(base.local_width()) {
                let cfg = candidate(width);
                let gap = (cfg.param_count()? as i64 - target).abs();
                if gap < best_gap {
                    best = cfg;
                    best_gap = gap;
                }
            }
            Ok(best)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub rec_pct: f64,
    pub acc_pct: f64,
    pub prec_pct: f64,
    pub f1_pct: f64,
    pub param_count: usize,
    pub metrics: Metrics,
    pub history: TrainHistory,
}

fn pct(v: f64) -> f64 {
    (v * 10000.0).round() / 100.0
}

impl AblationRow {
    pub fn new(variant: Variant, metrics: Metrics, param_count: usize, history: TrainHistory) -> Self {
        Self {
            variant,
            rec_pct: pct(metrics.macro_recall),
            acc_pct: pct(metrics.accuracy),
            prec_pct: pct(metrics.macro_precision),
            f1_pct: pct(metrics.macro_f1),
            param_count,
            metrics,
            history,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Accuracy of `full` minus accuracy of `variant`, in percentage points.
    pub fn accuracy_drop(&self, variant: Variant) -> Option<f64> {
        Some(self.row(Variant::Full)?.acc_pct - self.row(variant)?.acc_pct)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Aligned text table; percentages match the JSON fields exactly.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10}\n",
            "variant", "Rec(%)", "Acc(%)", "Prec(%)", "F1(%)", "dAcc", "params"
        );
        let full = self.row(Variant::Full).map_or(0.0, |r| r.acc_pct);
        for r in &self.rows {
            let delta = r.acc_pct - full;
            s.push_str(&format!(
                "{:<8} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>10}\n",
                r.variant.name(),
                r.rec_pct,
                r.acc_pct,
                r.prec_pct,
                r.f1_pct,
                delta,
                r.param_count
            ));
        }
        s
    }
}

/// Trains and evaluates all four variants with the same seeds and budget.
///
/// `encoder` fixes the image resolution; its `encoding` is overridden per
/// variant (row tiling for `no_gaf`, Gram images otherwise).
pub fn ablate(
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    train_instances: &[SignalInstance],
    test_instances: &[SignalInstance],
    encoder: &Encoder,
) -> Result<AblationTable> {
    let gasf = Encoder {
        encoding: Encoding::Gasf,
        ..encoder.clone()
    };
    let tiled = Encoder {
        encoding: Encoding::RowTiled,
        ..encoder.clone()
    };
    let (gasf_train, _) = encode_instances(train_instances, &gasf)?;
    let (gasf_test, _) = encode_instances(test_instances, &gasf)?;
    let (tiled_train, _) = encode_instances(train_instances, &tiled)?;
    let (tiled_test, _) = encode_instances(test_instances, &tiled)?;

    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let model_cfg = variant_model_config(base_model, variant)?;
        let train_cfg = TrainConfig {
            variant,
            ..base_train.clone()
        };
        let (tr, te) = match variant {
            Variant::NoGaf => (&tiled_train, &tiled_test),
            _ => (&gasf_train, &gasf_test),
        };
        log::info!("ablation: training variant {variant}");
        let (model, history) = train(&model_cfg, &train_cfg, tr, te)?;
        let metrics = evaluate(&model, te)?;
        rows.push(AblationRow::new(variant, metrics, model.param_count(), history));
    }
    Ok(AblationTable { rows })
}
