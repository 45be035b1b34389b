//! Window labeling, detection metrics and rank statistics.

mod metrics;
mod report;
mod stats;
mod windows;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::monitor::CONFIDENCE_GRID;
use crate::{Error, Result};

pub use metrics::{auc_roc, confusion, f_beta, Confusion};
pub use report::{evaluate_cell, macro_average, CellFlag, MetricRow};
pub use stats::{
    cohens_d, compare_samples, mann_whitney_u, MannWhitney, PValueMethod, StatTestResult,
    EXACT_LIMIT,
};
pub use windows::{label_windows, DetectionWindowSet, PositiveWindow, TraceRole, Window};

pub const DEFAULT_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Time-to-failure offsets in seconds.
    pub ttf: Vec<u32>,
    pub beta: f64,
    pub confidences: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ttf: vec![1, 2, 3],
            beta: DEFAULT_BETA,
            confidences: CONFIDENCE_GRID.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ttf.is_empty() || self.ttf.contains(&0) {
            return Err(Error::Config(alloc::format!(
                "ttf offsets must be positive, got {:?}",
                self.ttf
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(alloc::format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if let Some(c) = self.confidences.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::Config(alloc::format!(
                "confidence must lie in (0,1), got {c}"
            )));
        }
        Ok(())
    }
}
