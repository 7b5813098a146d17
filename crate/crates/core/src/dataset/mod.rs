//! BONN-format EEG records, sliding-window segmentation and record-level
//! train/test splitting.
//!
//! The BONN corpus ships as five directories (`Z`, `O`, `N`, `F`, `S`), each
//! holding 100 ASCII files of 4097 integer samples, one per line, recorded at
//! 173.61 Hz. Records are cut into overlapping windows; every window becomes
//! an independent [`SignalInstance`]. Splitting happens on whole records so
//! that overlapping windows of one recording never straddle train and test.

pub mod synthetic;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Samples per conforming BONN record.
pub const BONN_RECORD_LEN: usize = 4097;
/// BONN sampling frequency in Hz.
pub const BONN_SAMPLE_RATE_HZ: f64 = 173.61;

/// The five BONN subsets. Index order is fixed: Z=0, O=1, N=2, F=3, S=4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Z,
    O,
    N,
    F,
    S,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Z,
        ClassLabel::O,
        ClassLabel::N,
        ClassLabel::F,
        ClassLabel::S,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn tag(self) -> &'static str {
        match self {
            ClassLabel::Z => "Z",
            ClassLabel::O => "O",
            ClassLabel::N => "N",
            ClassLabel::F => "F",
            ClassLabel::S => "S",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Z" => Ok(ClassLabel::Z),
            "O" => Ok(ClassLabel::O),
            "N" => Ok(ClassLabel::N),
            "F" => Ok(ClassLabel::F),
            "S" => Ok(ClassLabel::S),
            other => Err(Error::InvalidConfig(format!("unknown class tag {other:?}"))),
        }
    }
}

/// One labeled raw recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    /// Source filename stem.
    pub id: String,
    pub label: ClassLabel,
    /// Microvolts, in file order.
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SignalRecord {
    pub fn new(id: impl Into<String>, label: ClassLabel, samples: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            label,
            samples,
            sample_rate: BONN_SAMPLE_RATE_HZ,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when the record has the 4097 samples of a genuine BONN file.
    pub fn is_conforming(&self) -> bool {
        self.samples.len() == BONN_RECORD_LEN
    }
}

/// A contiguous window cut from a [`SignalRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct SignalInstance {
    pub record_id: String,
    pub label: ClassLabel,
    /// Sample index of the window start in the parent record.
    pub offset: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    /// Fraction of each class's records assigned to train, in (0, 1].
    pub train_fraction: f64,
    pub seed: u64,
    pub window_len: usize,
    pub stride: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            seed: 0,
            window_len: 512,
            stride: 64,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.window_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "window_len must be at least 2, got {}",
                self.window_len
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        Ok(())
    }
}

/// Reads one BONN file: ASCII, one numeric sample per line.
///
/// Blank lines are ignored. Line numbers in [`Error::Parse`] are 1-based.
pub fn load_record(path: impl AsRef<Path>, label: ClassLabel) -> Result<SignalRecord> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let mut samples = Vec::with_capacity(BONN_RECORD_LEN);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let record = SignalRecord::new(id, label, samples);
    if !record.is_conforming() {
        log::debug!(
            "{}: {} samples (BONN records have {})",
            path.display(),
            record.len(),
            BONN_RECORD_LEN
        );
    }
    Ok(record)
}

/// Loads every record under `root/<tag>/` for the five class tags.
///
/// Files are read in lexicographic order; hidden files are skipped.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<SignalRecord>> {
    let root = root.as_ref();
    let mut records = Vec::new();
    for label in ClassLabel::ALL {
        let dir = root.join(label.tag());
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir));
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::read(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| {
                !p.file_name()
                    .map(|n| n.to_string_lossy().starts_with('.'))
                    .unwrap_or(true)
            })
            .collect();
        if files.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        files.sort();
        for file in files {
            records.push(load_record(&file, label)?);
        }
    }
    Ok(records)
}

/// Number of windows [`window_signal`] yields for a record of `len` samples.
pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if window_len == 0 || stride == 0 || window_len > len {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// Cuts `record` into windows starting at `0, stride, 2*stride, ...`.
/// A trailing remainder shorter than `window_len` is dropped.
pub fn window_signal(
    record: &SignalRecord,
    window_len: usize,
    stride: usize,
) -> Result<Vec<SignalInstance>> {
    if window_len == 0 || stride == 0 {
        return Err(Error::InvalidConfig(
            "window_len and stride must be positive".into(),
        ));
    }
    if window_len > record.len() {
        return Err(Error::WindowTooLong {
            window_len,
            record_len: record.len(),
        });
    }
    Ok(record
        .samples
        .windows(window_len)
        .step_by(stride)
        .enumerate()
        .map(|(k, values)| SignalInstance {
            record_id: record.id.clone(),
            label: record.label,
            offset: k * stride,
            values: values.to_vec(),
        })
        .collect())
}

/// Record-level stratified split. Per class, records are sorted by id,
/// shuffled with a generator seeded from `cfg.seed`, and the first
/// `round(train_fraction * n)` go to train.
pub fn split_records<'a>(
    records: &'a [SignalRecord],
    cfg: &SplitConfig,
) -> Result<(Vec<&'a SignalRecord>, Vec<&'a SignalRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in ClassLabel::ALL {
        let mut members: Vec<&SignalRecord> =
            records.iter().filter(|r| r.label == label).collect();
        if members.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
        let n_train = (cfg.train_fraction * members.len() as f64).round() as usize;
        let n_train = n_train.min(members.len());
        test.extend(members.split_off(n_train));
        train.extend(members);
    }
    Ok((train, test))
}

/// Splits records into partitions, then windows each partition.
pub fn split_dataset(
    records: &[SignalRecord],
    cfg: &SplitConfig,
) -> Result<(Vec<SignalInstance>, Vec<SignalInstance>)> {
    let (train_records, test_records) = split_records(records, cfg)?;
    let window_all = |part: Vec<&SignalRecord>| -> Result<Vec<SignalInstance>> {
        let mut out = Vec::new();
        for record in part {
            out.extend(window_signal(record, cfg.window_len, cfg.stride)?);
        }
        Ok(out)
    };
    Ok((window_all(train_records)?, window_all(test_records)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn ramp(id: &str, label: ClassLabel, len: usize) -> SignalRecord {
        SignalRecord::new(id, label, (0..len).map(|i| i as f64).collect())
    }

    fn corpus(per_class: usize, len: usize) -> Vec<SignalRecord> {
        ClassLabel::ALL
            .iter()
            .flat_map(|&label| {
                (0..per_class).map(move |i| ramp(&format!("{label}{i:03}"), label, len))
            })
            .collect()
    }

    #[test]
    fn label_indices_are_stable() {
        for (i, label) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(ClassLabel::from_index(i), Some(*label));
            assert_eq!(label.tag().parse::<ClassLabel>().unwrap(), *label);
        }
        assert_eq!(ClassLabel::from_index(5), None);
    }

    #[test]
    fn loads_bonn_length_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Z001.txt");
        let mut f = fs::File::create(&path).unwrap();
        for i in 0..BONN_RECORD_LEN {
            writeln!(f, "{}", i as i64 - 2000).unwrap();
        }
        let rec = load_record(&path, ClassLabel::Z).unwrap();
        assert_eq!(rec.samples.len(), 4097);
        assert_eq!(rec.id, "Z001");
        assert!(rec.is_conforming());
        assert_eq!(rec.samples[0], -2000.0);
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.txt");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            load_record(&path, ClassLabel::O),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "1\n2\nabc\n4\n").unwrap();
        match load_record(&path, ClassLabel::N) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_record("/nonexistent/x.txt", ClassLabel::F),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn window_counts_match_bonn_arithmetic() {
        let rec = ramp("r", ClassLabel::S, 4097);
        assert_eq!(window_signal(&rec, 512, 64).unwrap().len(), 57);
        assert_eq!(window_signal(&rec, 512, 128).unwrap().len(), 29);
        let exact = ramp("r", ClassLabel::S, 512);
        let w = window_signal(&exact, 512, 128).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].offset, 0);
    }

    #[test]
    fn window_too_long() {
        let rec = ramp("r", ClassLabel::Z, 100);
        assert!(matches!(
            window_signal(&rec, 101, 1),
            Err(Error::WindowTooLong {
                window_len: 101,
                record_len: 100
            })
        ));
    }

    #[test]
    fn split_counts_for_full_corpus() {
        let records = corpus(100, 4097);
        let cfg = SplitConfig::default();
        let (train, test) = split_dataset(&records, &cfg).unwrap();
        for label in ClassLabel::ALL {
            assert_eq!(train.iter().filter(|i| i.label == label).count(), 5130);
            assert_eq!(test.iter().filter(|i| i.label == label).count(), 570);
        }
    }

    #[test]
    fn split_full_fraction_leaves_test_empty() {
        let records = corpus(4, 600);
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..SplitConfig::default()
        };
        let (train, test) = split_dataset(&records, &cfg).unwrap();
        assert!(test.is_empty());
        assert_eq!(train.len(), 20 * window_count(600, 512, 64));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let records = corpus(10, 700);
        let cfg = SplitConfig {
            seed: 17,
            ..SplitConfig::default()
        };
        let a = split_dataset(&records, &cfg).unwrap();
        let b = split_dataset(&records, &cfg).unwrap();
        assert_eq!(a, b);
        let train_ids: HashSet<_> = a.0.iter().map(|i| i.record_id.as_str()).collect();
        assert!(a.1.iter().all(|i| !train_ids.contains(i.record_id.as_str())));
    }

    #[test]
    fn split_requires_every_class() {
        let records: Vec<_> = corpus(3, 600)
            .into_iter()
            .filter(|r| r.label != ClassLabel::F)
            .collect();
        assert!(matches!(
            split_dataset(&records, &SplitConfig::default()),
            Err(Error::EmptyClass(ClassLabel::F))
        ));
    }

    #[test]
    fn load_dataset_reports_empty_class_directory() {
        let dir = tempfile::tempdir().unwrap();
        for label in ClassLabel::ALL {
            let sub = dir.path().join(label.tag());
            fs::create_dir(&sub).unwrap();
            if label != ClassLabel::N {
                fs::write(sub.join("a.txt"), "1\n2\n3\n").unwrap();
            }
        }
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::EmptyClass(ClassLabel::N))
        ));
    }
}
