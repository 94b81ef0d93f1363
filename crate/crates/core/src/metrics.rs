//! Confusion matrices and precision/recall/F scores.
//!
//! An undefined score (division by zero) is `None`. Only the reporting layer
//! renders it as 0 via [`Scores::as_zero`].

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and truth key sets differ ({only_pred} only predicted, {only_truth} only in truth)")]
    KeyMismatch { only_pred: usize, only_truth: usize },
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Positional variant of [`confusion`].
    pub fn from_slices(pred: &[bool], truth: &[bool]) -> Result<Self, MetricsError> {
        if pred.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                truth: truth.len(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            c.add(p, t);
        }
        Ok(c)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// F1. Undefined whenever `tp = 0`: either a component is undefined or
    /// both are zero.
    pub fn f1(&self) -> Option<f64> {
        f_omega(self, 1.0)
    }

    pub fn scores(&self) -> Scores {
        Scores {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Tallies predictions against ground truth keyed by document id.
pub fn confusion<K: Eq + Hash>(pred: &HashMap<K, bool>, truth: &HashMap<K, bool>) -> Result<Confusion, MetricsError> {
    let only_pred = pred.keys().filter(|k| !truth.contains_key(k)).count();
    let only_truth = truth.keys().filter(|k| !pred.contains_key(k)).count();
    if only_pred + only_truth > 0 {
        return Err(MetricsError::KeyMismatch { only_pred, only_truth });
    }
    let mut c = Confusion::default();
    for (k, &p) in pred {
        c.add(p, truth[k]);
    }
    Ok(c)
}

/// Weighted harmonic mean `(ω²+1)·P·R / (ω²·P + R)`; ω > 1 favours recall.
///
/// Non-positive or non-finite `omega` yields `None`.
pub fn f_omega(c: &Confusion, omega: f64) -> Option<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return None;
    }
    let (p, r) = (c.precision()?, c.recall()?);
    let w2 = omega * omega;
    let den = w2 * p + r;
    (den > 0.0).then(|| (w2 + 1.0) * p * r / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// [`Scores`] with undefined values rendered as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RenderedScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn as_zero(&self) -> RenderedScores {
        RenderedScores {
            precision: self.precision.unwrap_or(0.0),
            recall: self.recall.unwrap_or(0.0),
            f1: self.f1.unwrap_or(0.0),
        }
    }
}

/// Formats an optional score for CSV output: empty when undefined.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm(tp: u64, fp: u64, fn_: u64, tn: u64) -> Confusion {
        Confusion { tp, fp, fn_, tn }
    }

    #[test]
    fn perfect_prediction() {
        let truth: HashMap<usize, bool> = (0..10).map(|i| (i, i < 3)).collect();
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!(c, cm(3, 0, 0, 7));
    }

    #[test]
    fn all_negative_prediction() {
        let truth: HashMap<usize, bool> = (0..10).map(|i| (i, i < 4)).collect();
        let pred: HashMap<usize, bool> = (0..10).map(|i| (i, false)).collect();
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c, cm(0, 0, 4, 6));
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), Some(0.0));
        assert_eq!(c.f1(), None);
        assert_eq!(c.scores().as_zero().f1, 0.0);
    }

    #[test]
    fn key_mismatch() {
        let a: HashMap<&str, bool> = [("x", true)].into();
        let b: HashMap<&str, bool> = [("y", true)].into();
        assert_eq!(confusion(&a, &b), Err(MetricsError::KeyMismatch { only_pred: 1, only_truth: 1 }));
    }

    #[test]
    fn f_omega_values() {
        assert_eq!(f_omega(&cm(1, 1, 1, 0), 1.0), Some(0.5));
        assert!((f_omega(&cm(1, 0, 3, 0), 1.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(f_omega(&cm(0, 0, 3, 5), 1.0), None);
        assert_eq!(f_omega(&cm(1, 0, 0, 0), 0.0), None);
        // ω = 2 weights recall: P = 1, R = 0.25 → 5·0.25/(4+0.25)
        assert!((f_omega(&cm(1, 0, 3, 0), 2.0).unwrap() - 1.25 / 4.25).abs() < 1e-15);
    }

    #[test]
    fn zero_tp_with_predictions_is_undefined_f1() {
        let c = cm(0, 3, 2, 1);
        assert_eq!(c.precision(), Some(0.0));
        assert_eq!(c.recall(), Some(0.0));
        assert_eq!(c.f1(), None);
    }

    proptest! {
        #[test]
        fn score_bounds(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50, omega in 0.1f64..5.0) {
            let c = cm(tp, fp, fn_, tn);
            for s in [c.precision(), c.recall(), f_omega(&c, omega)].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&s));
            }
            if let (Some(p), Some(r), Some(f)) = (c.precision(), c.recall(), c.f1()) {
                prop_assert!(p.min(r) - 1e-12 <= f && f <= p.max(r) + 1e-12);
            }
            let better = cm(tp + 1, fp, fn_, tn);
            if let (Some(a), Some(b)) = (f_omega(&c, omega), f_omega(&better, omega)) {
                prop_assert!(b > a);
            }
        }
    }
}
