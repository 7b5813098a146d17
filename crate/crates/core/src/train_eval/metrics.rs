//! Confusion matrices and macro-averaged classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes: n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus unweighted per-class means of recall, precision and F1.
///
/// A class never predicted has precision 0; a class absent from the truth
/// has recall 0; F1 with `P + R = 0` is 0.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> Result<Metrics> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let n = confusion.classes();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = confusion.get(c, c);
            let support: u64 = (0..n).map(|p| confusion.get(c, p)).sum();
            let predicted: u64 = (0..n).map(|t| confusion.get(t, c)).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    Ok(Metrics {
        confusion: confusion.rows(),
        accuracy: ratio(confusion.trace(), total),
        macro_recall: mean(|m| m.recall),
        macro_precision: mean(|m| m.precision),
        macro_f1: mean(|m| m.f1),
        per_class,
    })
}

impl Metrics {
    /// One-line summary in the column order Rec / Acc / Prec / F1, percent.
    pub fn summary(&self) -> String {
        format!(
            "Rec {:.2}%  Acc {:.2}%  Prec {:.2}%  F1 {:.2}%",
            100.0 * self.macro_recall,
            100.0 * self.accuracy,
            100.0 * self.macro_precision,
            100.0 * self.macro_f1
        )
    }

    /// Confusion matrix and summary as aligned text.
    pub fn to_text(&self, labels: &[&str]) -> String {
        let mut s = String::from("true\\pred");
        for l in labels {
            s.push_str(&format!("{l:>7}"));
        }
        s.push('\n');
        for (l, row) in labels.iter().zip(&self.confusion) {
            s.push_str(&format!("{l:<9}"));
            for v in row {
                s.push_str(&format!("{v:>7}"));
            }
            s.push('\n');
        }
        s.push_str(&self.summary());
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn diagonal_matrix_is_perfect() {
        let m = compute_metrics(&cm(&[
            &[4, 0, 0, 0, 0],
            &[0, 4, 0, 0, 0],
            &[0, 0, 4, 0, 0],
            &[0, 0, 0, 4, 0],
            &[0, 0, 0, 0, 4],
        ]))
        .unwrap();
        assert_eq!((m.accuracy, m.macro_recall, m.macro_precision, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(5)),
            Err(Error::EmptyConfusion)
        ));
    }

    #[test]
    fn uniform_matrix() {
        let m = compute_metrics(&ConfusionMatrix::from_rows(&vec![vec![1; 5]; 5]).unwrap()).unwrap();
        for v in [m.accuracy, m.macro_recall, m.macro_precision, m.macro_f1] {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_predictor() {
        let mut c = ConfusionMatrix::new(5);
        for t in 0..5 {
            for _ in 0..10 {
                c.record(t, 0);
            }
        }
        let m = compute_metrics(&c).unwrap();
        assert_eq!(m.accuracy, 0.2);
        assert_eq!(m.macro_recall, 0.2);
        assert!((m.macro_precision - 0.04).abs() < 1e-15);
        assert_eq!(m.per_class[0].precision, 0.2);
        assert!(m.per_class[1..].iter().all(|c| c.precision == 0.0));
    }

    #[test]
    fn two_class_hand_computed() {
        let m = compute_metrics(&cm(&[&[3, 1], &[2, 4]])).unwrap();
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m.per_class[0].recall, 0.75);
        assert_eq!(m.per_class[0].precision, 0.6);
    }
}
