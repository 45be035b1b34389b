use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EvalConfig;
use crate::monitor::window_max;
use crate::sim::{frame_rate, window_len_frames, SimTrace};
use crate::Result;

/// Half-open frame range `[start, end)` with the maximum score inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub max_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveWindow {
    pub failure_frame: usize,
    pub ttf: u32,
    pub window: Window,
}

/// Whether a trace supplies failures to predict or nominal windows that
/// must stay silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceRole {
    Nominal,
    Benchmark,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionWindowSet {
    pub positives: Vec<PositiveWindow>,
    pub negatives: Vec<Window>,
    /// Failure onsets seen, whether or not any window fit before them.
    pub failures: usize,
    /// Window length of every contributing trace.
    pub window_lengths: Vec<usize>,
    pub warnings: Vec<String>,
}

impl DetectionWindowSet {
    pub fn merge(&mut self, other: DetectionWindowSet) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
        self.failures += other.failures;
        self.window_lengths.extend(other.window_lengths);
        self.warnings.extend(other.warnings);
    }

    pub fn positives_at(&self, ttf: u32) -> impl Iterator<Item = &PositiveWindow> {
        self.positives.iter().filter(move |p| p.ttf == ttf)
    }

    pub fn positive_scores(&self, ttf: u32) -> Vec<f64> {
        self.positives_at(ttf).map(|p| p.window.max_score).collect()
    }

    pub fn negative_scores(&self) -> Vec<f64> {
        self.negatives.iter().map(|w| w.max_score).collect()
    }
}

/// Cuts a trace into one-second detection windows.
///
/// With `w = round(fps)`, the TTF = k window of a failure at frame `f` is
/// `[f − k·w, f − (k−1)·w)`. Off-track frames and the `w` frames after each
/// reset are excluded; a window touching them, or reaching back past the
/// previous reset, is dropped. Nominal traces
/// contribute the aligned windows `[i·w, (i+1)·w)` as negatives.
pub fn label_windows(
    trace: &SimTrace,
    cfg: &EvalConfig,
    role: TraceRole,
) -> Result<DetectionWindowSet> {
    cfg.validate()?;
    let fps = frame_rate(trace)?;
    let w = window_len_frames(fps, 1.0);
    let n = trace.records.len();
    let scores = trace.scores();
    let onsets = trace.failure_onsets();

    let mut excluded = vec![false; n];
    for (i, r) in trace.records.iter().enumerate() {
        if r.off_track {
            excluded[i] = true;
            for e in excluded.iter_mut().take((i + w + 1).min(n)).skip(i + 1) {
                *e = true;
            }
        }
    }
    let clean = |start: usize, end: usize| !excluded[start..end].iter().any(|&e| e);

    let mut set = DetectionWindowSet {
        window_lengths: vec![w],
        ..Default::default()
    };
    match role {
        TraceRole::Nominal => {
            if !onsets.is_empty() {
                let msg = alloc::format!(
                    "nominal trace {} has {} failures; their frames are skipped",
                    trace.meta.seed,
                    onsets.len()
                );
                log::warn!("{msg}");
                set.warnings.push(msg);
            }
            for i in 0..n / w {
                let (start, end) = (i * w, (i + 1) * w);
                if clean(start, end) {
                    set.negatives.push(Window {
                        start,
                        end,
                        max_score: window_max(&scores[start..end]),
                    });
                }
            }
        }
        TraceRole::Benchmark => {
            set.failures = onsets.len();
            let mut floor = 0;
            for &f in &onsets {
                let history = f.saturating_sub(floor);
                for &k in &cfg.ttf {
                    let back = k as usize * w;
                    if back > history {
                        let msg = alloc::format!(
                            "failure at frame {f}: only {history} frames of history, TTF={k}s needs {back}"
                        );
                        log::debug!("{msg}");
                        set.warnings.push(msg);
                        continue;
                    }
                    let (start, end) = (f - back, f - back + w);
                    if clean(start, end) {
                        set.positives.push(PositiveWindow {
                            failure_frame: f,
                            ttf: k,
                            window: Window {
                                start,
                                end,
                                max_score: window_max(&scores[start..end]),
                            },
                        });
                    }
                }
                // History before a reset belongs to the previous failure.
                floor = (f + w + 1).min(n);
            }
            if !set.warnings.is_empty() {
                log::warn!(
                    "trace {}: {} TTF windows skipped for lack of history",
                    trace.meta.seed,
                    set.warnings.len()
                );
            }
        }
    }
    Ok(set)
}
