use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DetectionWindowSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// `TP / (TP + FP)`; with no alarms it is 1 when there was nothing to
    /// detect and 0 otherwise.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            if self.tp + self.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// `TP / (TP + FN)`, 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn false_alarm_rate(&self) -> f64 {
        if self.fp + self.tn == 0 {
            0.0
        } else {
            self.fp as f64 / (self.fp + self.tn) as f64
        }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }
}

/// Counts alarms (`max_score > tau`) over the TTF = `ttf` positive windows and
/// over all negative windows.
pub fn confusion(windows: &DetectionWindowSet, tau: f64, ttf: u32) -> Confusion {
    let mut c = Confusion::default();
    for p in windows.positives_at(ttf) {
        if p.window.max_score > tau {
            c.tp += 1;
        } else {
            c.fn_ += 1;
        }
    }
    for n in &windows.negatives {
        if n.max_score > tau {
            c.fp += 1;
        } else {
            c.tn += 1;
        }
    }
    c
}

/// `(1 + β²)·pr·re / (β²·pr + re)`, defined as 0 when both are 0.
pub fn f_beta(pr: f64, re: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(alloc::format!(
            "beta must be positive, got {beta}"
        )));
    }
    if !(0.0..=1.0).contains(&pr) || !(0.0..=1.0).contains(&re) {
        return Err(Error::Domain(alloc::format!(
            "precision {pr} and recall {re} must be in [0,1]"
        )));
    }
    let b2 = beta * beta;
    let denom = b2 * pr + re;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * pr * re / denom)
}

/// Probability that a positive outscores a negative, ties counting ½.
pub fn auc_roc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::InsufficientData(alloc::format!(
            "AUC needs both classes, got {} positives and {} negatives",
            pos_scores.len(),
            neg_scores.len()
        )));
    }
    if pos_scores.iter().chain(neg_scores).any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let mut neg: Vec<f64> = neg_scores.to_vec();
    neg.sort_by(f64::total_cmp);
    // Twice the win count plus ties, in integers.
    let mut doubled: u64 = 0;
    for &p in pos_scores {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        doubled += 2 * below as u64 + (not_above - below) as u64;
    }
    Ok(doubled as f64 / (2 * pos_scores.len() * neg_scores.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{PositiveWindow, Window};
    use approx::assert_relative_eq;

    fn set(pos: &[f64], neg: &[f64]) -> DetectionWindowSet {
        let w = |s: f64| Window {
            start: 0,
            end: 1,
            max_score: s,
        };
        DetectionWindowSet {
            positives: pos
                .iter()
                .map(|&s| PositiveWindow {
                    failure_frame: 0,
                    ttf: 1,
                    window: w(s),
                })
                .collect(),
            negatives: neg.iter().map(|&s| w(s)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn confusion_enumeration() {
        let c = confusion(&set(&[0.9, 0.2], &[0.5, 0.1]), 0.4, 1);
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 1
            }
        );
    }

    #[test]
    fn perfect_separation() {
        let c = confusion(&set(&[0.9, 0.8], &[0.1, 0.2]), 0.5, 1);
        assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn zero_threshold_alarms_always() {
        let c = confusion(&set(&[0.9, 0.2], &[0.5, 0.1]), 0.0, 1);
        assert_eq!(c.recall(), 1.0);
        assert_eq!(c.tn, 0);
    }

    #[test]
    fn other_ttf_is_independent() {
        let c = confusion(&set(&[0.9, 0.2], &[0.5]), 0.4, 2);
        assert_eq!(c.positives(), 0);
        assert_eq!(c.negatives(), 1);
    }

    #[test]
    fn zero_denominator_conventions() {
        let none = Confusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 4,
        };
        assert_eq!(none.precision(), 1.0);
        let missed = Confusion {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 4,
        };
        assert_eq!(missed.precision(), 0.0);
        assert_eq!(f_beta(0.0, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn f_beta_examples() {
        assert_eq!(f_beta(1.0, 1.0, 3.0).unwrap(), 1.0);
        assert_relative_eq!(
            f_beta(0.5, 1.0, 3.0).unwrap(),
            5.0 / 5.5,
            max_relative = 1e-12
        );
        let f = f_beta(0.96, 0.94, 3.0).unwrap();
        assert_eq!((f * 100.0).round(), 94.0);
        assert!(f_beta(0.5, 0.5, 0.0).is_err());
        assert!(f_beta(1.5, 0.5, 3.0).is_err());
    }

    #[test]
    fn f_one_is_harmonic_mean() {
        let (p, r) = (0.3, 0.8);
        assert_relative_eq!(
            f_beta(p, r, 1.0).unwrap(),
            2.0 * p * r / (p + r),
            max_relative = 1e-14
        );
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        let same = [0.1, 0.5, 0.5, 0.9];
        assert_eq!(auc_roc(&same, &same).unwrap(), 0.5);
        assert!(matches!(
            auc_roc(&[], &[1.0]),
            Err(Error::InsufficientData(_))
        ));
    }
}
