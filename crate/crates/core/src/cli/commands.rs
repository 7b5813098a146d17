use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::archive::GafArchive;
use super::config::{encoding_name, RunConfig};
use super::render::{image_filename, write_png, Palette};
use crate::dataset::synthetic::{generate, write_bonn_layout, SyntheticConfig};
use crate::dataset::{
    load_dataset, load_record, split_dataset, window_signal, ClassLabel, BONN_RECORD_LEN,
};
use crate::error::{Error, Result};
use crate::gaf::Encoding;
use crate::nn::{load_checkpoint, save_checkpoint, Layer};
use crate::train_eval::{ablate, evaluate, train, variant_model_config, Variant};

#[derive(Debug, Parser)]
#[command(name = "grcnet", version, about = "GAF encoding and CoT-attention CNN for EEG windows")]
pub struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the split, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Window, split and encode a BONN-layout dataset into train.gaf / test.gaf.
    Encode {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train on encoded archives; writes checkpoint.grc and history.json.
    Train {
        #[arg(long)]
        train_archive: Option<PathBuf>,
        #[arg(long)]
        test_archive: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Evaluate a checkpoint on an archive; writes metrics.json.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Train and evaluate full, no_gaf, no_cot and no_ru under one budget.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Render archive images, or the windows of one record file, as PNGs.
    Render {
        #[arg(long)]
        input: PathBuf,
        /// Class of a single record file; defaults to its directory name.
        #[arg(long)]
        label: Option<ClassLabel>,
        /// Maximum number of images to write.
        #[arg(long, default_value_t = 16)]
        limit: usize,
        #[arg(long, value_enum, default_value_t = PaletteArg::Gray)]
        palette: PaletteArg,
    },
    /// Write a separable synthetic dataset in the BONN directory layout.
    Synth {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        records_per_class: usize,
        #[arg(long, default_value_t = BONN_RECORD_LEN)]
        record_len: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
    },
}

#[derive(Debug, Default, Args)]
pub struct Budget {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PaletteArg {
    Gray,
    Diverging,
}

impl Budget {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
    }
}

impl Cli {
    /// Config file, then `--set`, then dedicated flags.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.set_pair(pair)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        match &self.command {
            Command::Encode { dataset } | Command::Ablate { dataset, .. } | Command::Synth { dataset, .. } => {
                if let Some(d) = dataset {
                    cfg.dataset_root = d.clone();
                }
            }
            _ => {}
        }
        match &self.command {
            Command::Train { budget, variant, .. } => {
                budget.apply(&mut cfg);
                if let Some(v) = variant {
                    cfg.train.variant = *v;
                }
            }
            Command::Ablate { budget, .. } => budget.apply(&mut cfg),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::write(&out, e))?;
    match &cli.command {
        Command::Encode { .. } => {
            let summary = cmd_encode(&cfg)?;
            print!("{}", summary.to_text());
        }
        Command::Train {
            train_archive,
            test_archive,
            ..
        } => cmd_train(&cfg, train_archive.as_deref(), test_archive.as_deref())?,
        Command::Eval { checkpoint, archive } => {
            cmd_eval(&cfg, checkpoint.as_deref(), archive.as_deref())?;
        }
        Command::Ablate { .. } => cmd_ablate(&cfg)?,
        Command::Render {
            input,
            label,
            limit,
            palette,
        } => {
            let palette = match palette {
                PaletteArg::Gray => Palette::Gray,
                PaletteArg::Diverging => Palette::Diverging,
            };
            let written = cmd_render(&cfg, input, *label, *limit, palette)?;
            println!("wrote {} images to {}", written.len(), out.join("render").display());
        }
        Command::Synth {
            records_per_class,
            record_len,
            noise,
            ..
        } => {
            let records = generate(&SyntheticConfig {
                records_per_class: *records_per_class,
                record_len: *record_len,
                noise: *noise,
                seed: cfg.seed,
            })?;
            write_bonn_layout(&records, &cfg.dataset_root)?;
            println!(
                "wrote {} synthetic records to {}",
                records.len(),
                cfg.dataset_root.display()
            );
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::write(path, e))
}

#[derive(Clone, Debug, Serialize)]
pub struct EncodeSummary {
    pub train: BTreeMap<String, usize>,
    pub test: BTreeMap<String, usize>,
    pub skipped_train: usize,
    pub skipped_test: usize,
    pub nonconforming_records: usize,
    pub image_size: usize,
}

impl EncodeSummary {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<6} {:>8} {:>8}\n", "class", "train", "test");
        for label in ClassLabel::ALL {
            s.push_str(&format!(
                "{:<6} {:>8} {:>8}\n",
                label.tag(),
                self.train[label.tag()],
                self.test[label.tag()]
            ));
        }
        s.push_str(&format!(
            "skipped constant windows: {} train, {} test\nimage size: {}x{}\n",
            self.skipped_train, self.skipped_test, self.image_size, self.image_size
        ));
        if self.nonconforming_records > 0 {
            s.push_str(&format!(
                "records with length != {BONN_RECORD_LEN}: {}\n",
                self.nonconforming_records
            ));
        }
        s
    }
}

fn counts_by_tag(counts: [usize; ClassLabel::COUNT]) -> BTreeMap<String, usize> {
    ClassLabel::ALL
        .into_iter()
        .map(|l| (l.tag().to_string(), counts[l.index()]))
        .collect()
}

/// Loads, splits, windows and encodes; writes `train.gaf`, `test.gaf`,
/// `encode_summary.json` and `config.txt` into the output directory.
pub fn cmd_encode(cfg: &RunConfig) -> Result<EncodeSummary> {
    let records = load_dataset(&cfg.dataset_root)?;
    let nonconforming_records = records.iter().filter(|r| !r.is_conforming()).count();
    let (train_inst, test_inst) = split_dataset(&records, &cfg.split_config())?;
    let encoder = cfg.encoder();
    let (train_arc, skipped_train) = GafArchive::encode(&train_inst, &encoder)?;
    let (test_arc, skipped_test) = GafArchive::encode(&test_inst, &encoder)?;
    let out = &cfg.output_dir;
    train_arc.write(out.join("train.gaf"))?;
    test_arc.write(out.join("test.gaf"))?;
    let summary = EncodeSummary {
        train: counts_by_tag(train_arc.class_counts()),
        test: counts_by_tag(test_arc.class_counts()),
        skipped_train,
        skipped_test,
        nonconforming_records,
        image_size: encoder.image_size(),
    };
    write_text(
        &out.join("encode_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    cfg.write_echo(out)?;
    Ok(summary)
}

fn open_archive(explicit: Option<&Path>, default: PathBuf, cfg: &RunConfig) -> Result<GafArchive> {
    match explicit {
        Some(path) => GafArchive::read(path),
        None => {
            if !default.exists() {
                log::info!("{} not found, encoding {}", default.display(), cfg.dataset_root.display());
                cmd_encode(cfg)?;
            }
            GafArchive::read(default)
        }
    }
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
}

/// Trains on the archives; writes `checkpoint.grc`, `history.json`,
/// `timing.json` and `config.txt`. On divergence the partial history is
/// still written.
pub fn cmd_train(cfg: &RunConfig, train_archive: Option<&Path>, test_archive: Option<&Path>) -> Result<()> {
    let out = &cfg.output_dir;
    let train_arc = open_archive(train_archive, out.join("train.gaf"), cfg)?;
    let test_arc = open_archive(test_archive, out.join("test.gaf"), cfg)?;
    if train_arc.size != test_arc.size {
        return Err(Error::InvalidConfig(format!(
            "train images are {0}x{0} but test images are {1}x{1}",
            train_arc.size, test_arc.size
        )));
    }
    let variant = cfg.train.variant;
    let wanted = if variant == Variant::NoGaf {
        Encoding::RowTiled
    } else {
        Encoding::Gasf
    };
    if train_arc.encoding != wanted {
        return Err(Error::InvalidConfig(format!(
            "variant {variant} expects {} archives, got {}",
            encoding_name(wanted),
            encoding_name(train_arc.encoding)
        )));
    }
    let model_cfg = variant_model_config(
        &cfg.model_config().with_input_size(train_arc.size),
        variant,
    )?;
    cfg.write_echo(out)?;
    let started = Instant::now();
    let result = train(
        &model_cfg,
        &cfg.train_config(),
        &train_arc.to_image_set()?,
        &test_arc.to_image_set()?,
    );
    let seconds = started.elapsed().as_secs_f64();
    write_text(
        &out.join("timing.json"),
        &serde_json::to_string_pretty(&Timing {
            wall_clock_seconds: seconds,
        })
        .expect("timing serializes"),
    )?;
    match result {
        Ok((model, history)) => {
            save_checkpoint(&model, out.join("checkpoint.grc"))?;
            write_text(&out.join("history.json"), &history.to_json())?;
            if let Some(last) = history.epochs.last() {
                println!(
                    "trained {} epochs ({} parameters): train loss {:.4}, test accuracy {:.2}%",
                    history.epochs.len(),
                    model.param_count(),
                    last.train_loss,
                    100.0 * last.test_accuracy
                );
            }
            Ok(())
        }
        Err(Error::DivergenceDetected { epoch, history }) => {
            write_text(&out.join("history.json"), &history.to_json())?;
            Err(Error::DivergenceDetected { epoch, history })
        }
        Err(e) => Err(e),
    }
}

/// Evaluates a checkpoint; writes `metrics.json` and prints the table.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, archive: Option<&Path>) -> Result<crate::train_eval::Metrics> {
    let out = &cfg.output_dir;
    let ck_path = checkpoint.map_or_else(|| out.join("checkpoint.grc"), Path::to_path_buf);
    let arc_path = archive.map_or_else(|| out.join("test.gaf"), Path::to_path_buf);
    let model = load_checkpoint(&ck_path)?;
    let arc = GafArchive::read(&arc_path)?;
    let mc = model.config();
    if mc.input_height != arc.size || mc.input_width != arc.size || mc.input_channels != 1 {
        return Err(Error::IncompatibleCheckpoint(format!(
            "{} expects {}x{}x{} inputs, {} holds {}x{} images",
            ck_path.display(),
            mc.input_height,
            mc.input_width,
            mc.input_channels,
            arc_path.display(),
            arc.size,
            arc.size
        )));
    }
    if mc.num_classes != ClassLabel::COUNT {
        return Err(Error::IncompatibleCheckpoint(format!(
            "{} predicts {} classes, archives use {}",
            ck_path.display(),
            mc.num_classes,
            ClassLabel::COUNT
        )));
    }
    if arc.is_empty() {
        return Err(Error::InvalidConfig(format!("{} holds no images", arc_path.display())));
    }
    let metrics = evaluate(&model, &arc.to_image_set()?)?;
    write_text(
        &out.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;
    let tags: Vec<&str> = ClassLabel::ALL.iter().map(|l| l.tag()).collect();
    print!("{}", metrics.to_text(&tags));
    Ok(metrics)
}

/// Writes `ablation.txt`, `ablation.json` and `config.txt`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let records = load_dataset(&cfg.dataset_root)?;
    let (train_inst, test_inst) = split_dataset(&records, &cfg.split_config())?;
    let table = ablate(
        &cfg.model_config(),
        &cfg.train_config(),
        &train_inst,
        &test_inst,
        &cfg.encoder(),
    )?;
    let out = &cfg.output_dir;
    cfg.write_echo(out)?;
    let text = table.to_text();
    write_text(&out.join("ablation.txt"), &text)?;
    write_text(&out.join("ablation.json"), &table.to_json())?;
    print!("{text}");
    Ok(())
}

/// Renders up to `limit` images into `<out>/render`. Returns written paths.
pub fn cmd_render(
    cfg: &RunConfig,
    input: &Path,
    label: Option<ClassLabel>,
    limit: usize,
    palette: Palette,
) -> Result<Vec<PathBuf>> {
    let dir = cfg.output_dir.join("render");
    fs::create_dir_all(&dir).map_err(|e| Error::write(&dir, e))?;
    let head = fs::read(input).map_err(|e| Error::read(input, e))?;
    let arc = if head.starts_with(super::archive::ARCHIVE_MAGIC) {
        GafArchive::from_bytes(&head, input)?
    } else {
        let label = match label {
            Some(l) => l,
            None => input
                .parent()
                .and_then(Path::file_name)
                .and_then(|n| n.to_str())
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "cannot infer the class of {}; pass --label",
                        input.display()
                    ))
                })?,
        };
        let record = load_record(input, label)?;
        let windows = window_signal(&record, cfg.window_len, cfg.stride)?;
        GafArchive::encode(&windows, &cfg.encoder())?.0
    };
    let mut written = Vec::new();
    for e in arc.entries.iter().take(limit) {
        let path = dir.join(image_filename(&e.record_id, e.offset, e.label.tag()));
        let values: Vec<f64> = e.pixels.iter().map(|&v| f64::from(v)).collect();
        write_png(&values, arc.size, palette, &path)?;
        written.push(path);
    }
    Ok(written)
}
