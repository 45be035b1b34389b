use super::GammaModel;
use crate::{Error, Result};

/// Streaming form of the windowed-max comparison.
///
/// Feeding a series frame by frame yields exactly the alarms of
/// [`super::window_scores`] followed by a threshold comparison.
#[derive(Debug, Clone)]
pub struct MonitorState {
    window_len_frames: usize,
    running_max: f64,
    frames_in_window: usize,
    model: GammaModel,
}

impl MonitorState {
    pub fn new(window_len_frames: usize, model: GammaModel) -> Result<Self> {
        if window_len_frames == 0 {
            return Err(Error::Config(
                "window length must be at least one frame".into(),
            ));
        }
        Ok(Self {
            window_len_frames,
            running_max: f64::NEG_INFINITY,
            frames_in_window: 0,
            model,
        })
    }

    pub fn window_len_frames(&self) -> usize {
        self.window_len_frames
    }

    pub fn model(&self) -> &GammaModel {
        &self.model
    }

    /// Consumes one score. Returns `Some(alarm)` when the frame completes a
    /// window, `None` mid-window.
    pub fn step(&mut self, score: f64) -> Result<Option<bool>> {
        if !(score >= 0.0) {
            return Err(Error::Input(alloc::format!(
                "score {score} is negative or NaN"
            )));
        }
        self.running_max = self.running_max.max(score);
        self.frames_in_window += 1;
        if self.frames_in_window < self.window_len_frames {
            return Ok(None);
        }
        let alarm = self.model.is_alarm(self.running_max);
        self.running_max = f64::NEG_INFINITY;
        self.frames_in_window = 0;
        Ok(Some(alarm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn model_with_threshold(tau: f64) -> GammaModel {
        GammaModel {
            shape: 1.0,
            scale: 1.0,
            confidence: 0.95,
            threshold: tau,
        }
    }

    fn run(w: usize, tau: f64, scores: &[f64]) -> Vec<Option<bool>> {
        let mut m = MonitorState::new(w, model_with_threshold(tau)).unwrap();
        scores.iter().map(|&s| m.step(s).unwrap()).collect()
    }

    #[test]
    fn below_threshold_no_alarm() {
        assert_eq!(run(2, 5.0, &[1.0, 2.0]), [None, Some(false)]);
    }

    #[test]
    fn max_exceeds_threshold() {
        assert_eq!(run(2, 5.0, &[1.0, 6.0]), [None, Some(true)]);
    }

    #[test]
    fn early_peak_persists_through_window() {
        assert_eq!(run(3, 5.0, &[9.0, 0.0, 0.0]), [None, None, Some(true)]);
    }

    #[test]
    fn resets_each_window() {
        assert_eq!(
            run(2, 5.0, &[9.0, 0.0, 1.0, 1.0]),
            [None, Some(true), None, Some(false)]
        );
    }

    #[test]
    fn negative_score_rejected() {
        let mut m = MonitorState::new(2, model_with_threshold(1.0)).unwrap();
        assert!(matches!(m.step(-1.0), Err(Error::Input(_))));
        assert!(MonitorState::new(0, model_with_threshold(1.0)).is_err());
    }
}
