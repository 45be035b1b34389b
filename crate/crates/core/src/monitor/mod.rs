//! From per-frame scores to alarms.
//!
//! Scores are reduced to the maximum over non-overlapping fixed-length
//! windows. A Gamma distribution is fitted to the windowed scores of a
//! nominal run and its γ-quantile becomes the alarm threshold, so `1 − γ` is
//! the expected false-alarm rate per window under nominal conditions.

mod gamma;
mod online;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use gamma::{fit_gamma, threshold_for, GammaFit, GammaModel, ZERO_SHIFT};
pub use online::MonitorState;

use crate::{Error, Result};

/// Confidence levels evaluated by default.
pub const CONFIDENCE_GRID: [f64; 5] = [0.95, 0.99, 0.999, 0.9999, 0.99999];

/// Ordered per-frame scores of one estimator on one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    scores: Vec<f64>,
    timestamps: Vec<f64>,
    estimator: String,
    episode: String,
}

impl ScoreSeries {
    pub fn new(
        scores: Vec<f64>,
        timestamps: Vec<f64>,
        estimator: impl Into<String>,
        episode: impl Into<String>,
    ) -> Result<Self> {
        if scores.len() != timestamps.len() {
            return Err(Error::Shape(alloc::format!(
                "{} scores but {} timestamps",
                scores.len(),
                timestamps.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::Input(alloc::format!(
                "score {bad} is negative or NaN"
            )));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input(
                "timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            scores,
            timestamps,
            estimator: estimator.into(),
            episode: episode.into(),
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn estimator(&self) -> &str {
        &self.estimator
    }

    pub fn episode(&self) -> &str {
        &self.episode
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn windowed(&self, window_len_frames: usize) -> Result<Vec<f64>> {
        window_scores(&self.scores, window_len_frames)
    }
}

/// Maximum of each complete, non-overlapping window of `window_len_frames`
/// scores. A trailing partial window is discarded.
pub fn window_scores(scores: &[f64], window_len_frames: usize) -> Result<Vec<f64>> {
    if window_len_frames == 0 {
        return Err(Error::Config(
            "window length must be at least one frame".into(),
        ));
    }
    Ok(scores
        .chunks_exact(window_len_frames)
        .map(window_max)
        .collect())
}

pub(crate) fn window_max(window: &[f64]) -> f64 {
    window.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_window_max() {
        assert_eq!(window_scores(&[1.0, 2.0, 3.0], 3).unwrap(), vec![3.0]);
    }

    #[test]
    fn unit_window_is_identity() {
        let s = [0.3, 0.0, 7.0, 2.5];
        assert_eq!(window_scores(&s, 1).unwrap(), s.to_vec());
    }

    #[test]
    fn trailing_partial_window_dropped() {
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let w = window_scores(&s, 4).unwrap();
        assert_eq!(w, vec![3.0, 7.0]);
    }

    #[test]
    fn empty_and_zero_window() {
        assert!(window_scores(&[], 5).unwrap().is_empty());
        assert!(matches!(window_scores(&[1.0], 0), Err(Error::Config(_))));
    }

    #[test]
    fn series_validation() {
        assert!(ScoreSeries::new(vec![1.0], vec![0.0, 1.0], "de", "ep").is_err());
        assert!(ScoreSeries::new(vec![1.0, -1.0], vec![0.0, 1.0], "de", "ep").is_err());
        assert!(ScoreSeries::new(vec![1.0, 1.0], vec![0.0, 0.0], "de", "ep").is_err());
        let s = ScoreSeries::new(vec![1.0, 4.0], vec![0.0, 0.05], "de", "ep").unwrap();
        assert_eq!(s.windowed(2).unwrap(), vec![4.0]);
    }
}
