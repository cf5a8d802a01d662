use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, NUM_EMOTIONS};

/// A predicted class, or the error category for outputs that named no
/// valid class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Class(usize),
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("label {0} out of range")]
    BadLabel(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Macro-F1 after dropping instances predicted as the error category;
    /// NaN when nothing is left.
    pub macro_f1_excluding_error: f64,
    /// `gold x predicted`, the last column counting error predictions.
    pub confusion: Vec<Vec<usize>>,
    pub error_predictions: usize,
}

/// Per-class F1 as `(2 tp, predicted + actual)`; `0/0` reads as zero.
fn f1_fractions(confusion: &[Vec<usize>], n: usize) -> Vec<(u64, u64)> {
    (0..n)
        .map(|c| {
            let tp = confusion[c][c] as u64;
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let actual: usize = confusion[c].iter().sum();
            (2 * tp, (predicted + actual) as u64)
        })
        .collect()
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions rounded once, so it equals the exact rational mean to
/// the nearest double; `None` when the reduced terms outgrow a double's
/// integer range.
fn exact_mean(fracs: &[(u64, u64)]) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(n, d) in fracs {
        if d == 0 || n == 0 {
            continue;
        }
        let (n, d) = (n as u128, d as u128);
        let g = gcd(den, d);
        num = num.checked_mul(d / g)?.checked_add(n.checked_mul(den / g)?)?;
        den = den.checked_mul(d / g)?;
        let r = gcd(num, den);
        (num, den) = (num / r, den / r);
    }
    den = den.checked_mul(fracs.len() as u128)?;
    let r = gcd(num, den).max(1);
    (num, den) = (num / r, den / r);
    const EXACT: u128 = 1 << 53;
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

fn macro_f1(fracs: &[(u64, u64)]) -> f64 {
    exact_mean(fracs).unwrap_or_else(|| fracs.iter().map(|&(n, d)| ratio(n, d)).sum::<f64>() / fracs.len() as f64)
}

pub fn evaluate(predictions: &[Prediction], golds: &[usize], n_classes: usize) -> Result<MetricsReport, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    let mut confusion = vec![vec![0usize; n_classes + 1]; n_classes];
    for (p, &g) in predictions.iter().zip(golds) {
        if g >= n_classes {
            return Err(MetricsError::BadLabel(g));
        }
        let col = match *p {
            Prediction::Class(c) if c < n_classes => c,
            Prediction::Class(c) => return Err(MetricsError::BadLabel(c)),
            Prediction::Error => n_classes,
        };
        confusion[g][col] += 1;
    }
    let fracs = f1_fractions(&confusion, n_classes);
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let error_predictions: usize = confusion.iter().map(|r| r[n_classes]).sum();
    let kept: Vec<Vec<usize>> = confusion
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r[n_classes] = 0;
            r
        })
        .collect();
    let macro_f1_excluding_error = if error_predictions == golds.len() {
        f64::NAN
    } else {
        macro_f1(&f1_fractions(&kept, n_classes))
    };
    Ok(MetricsReport {
        macro_f1: macro_f1(&fracs),
        per_class_f1: fracs.iter().map(|&(n, d)| ratio(n, d)).collect(),
        accuracy: if golds.is_empty() { 0.0 } else { correct as f64 / golds.len() as f64 },
        macro_f1_excluding_error,
        confusion,
        error_predictions,
    })
}

pub const METRICS_COLUMNS: [&str; 10] = ["Models", "Happy", "Anger", "Sad", "Disgust", "Fear", "Surprise", "Neutral", "Macro-F1", "Accuracy"];

impl MetricsReport {
    /// Macro-F1 cell, with the excluding-error value in parentheses when
    /// any prediction fell in the error category.
    pub fn macro_cell(&self) -> String {
        if self.error_predictions > 0 {
            format!("{:.3}({:.3})", self.macro_f1, self.macro_f1_excluding_error)
        } else {
            format!("{:.3}", self.macro_f1)
        }
    }

    pub fn row(&self, model: &str) -> String {
        let mut cells = vec![model.to_string()];
        cells.extend(self.per_class_f1.iter().map(|f| format!("{f:.3}")));
        cells.push(self.macro_cell());
        cells.push(format!("{:.3}", self.accuracy));
        cells.join(" | ")
    }
}

/// Per-emotion F1, macro-F1 and accuracy, one row per model.
pub fn metrics_table(rows: &[(String, MetricsReport)]) -> String {
    debug_assert_eq!(Emotion::ALL.len(), NUM_EMOTIONS);
    let mut out = String::new();
    let _ = writeln!(out, "{}", METRICS_COLUMNS.join(" | "));
    for (name, r) in rows {
        let _ = writeln!(out, "{}", r.row(name));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_confusion(m: &[&[usize]]) -> (Vec<Prediction>, Vec<usize>) {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (gold, row) in m.iter().enumerate() {
            for (pred, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    g.push(gold);
                    p.push(Prediction::Class(pred));
                }
            }
        }
        (p, g)
    }

    #[test]
    fn three_class_hand_example() {
        let (p, g) = from_confusion(&[&[2, 1, 0], &[0, 1, 1], &[1, 0, 2]]);
        let r = evaluate(&p, &g, 3).unwrap();
        let expect = [2.0 / 3.0, 0.5, 2.0 / 3.0];
        for (a, b) in r.per_class_f1.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((r.macro_f1 - 0.611_111_111_111).abs() < 1e-9);
        assert!((r.accuracy - 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn all_correct_and_all_error() {
        let g = vec![0, 1, 2, 3, 4, 5, 6];
        let p: Vec<_> = g.iter().map(|&c| Prediction::Class(c)).collect();
        let r = evaluate(&p, &g, 7).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        let e = evaluate(&vec![Prediction::Error; 7], &g, 7).unwrap();
        assert_eq!((e.accuracy, e.macro_f1), (0.0, 0.0));
        assert!(e.macro_f1_excluding_error.is_nan());
        assert!(evaluate(&p[..3], &g, 7).is_err());
    }

    #[test]
    fn table_layout() {
        let g = vec![0, 1];
        let r = evaluate(&[Prediction::Class(0), Prediction::Error], &g, 7).unwrap();
        let t = metrics_table(&[("m".into(), r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Models | Happy | Anger | Sad | Disgust | Fear | Surprise | Neutral | Macro-F1 | Accuracy");
        assert!(lines[1].contains("("));
        assert_eq!(lines[1].split(" | ").count(), 10);
    }
}
