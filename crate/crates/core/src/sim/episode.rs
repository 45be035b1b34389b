use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use serde::{Deserialize, Serialize};

use super::{
    observe, step, Controller, Frame, ObservationConfig, PerturbationSpec, Track, VehicleState,
    DEFAULT_DT, MAX_STEERING,
};
use crate::monitor::ScoreSeries;
use crate::uq::Scorer;
use crate::{Error, Result};

/// Where the vehicle starts, relative to the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub arc: f64,
    pub lateral: f64,
    pub heading_offset: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self {
            arc: 0.0,
            lateral: 0.0,
            heading_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub start: StartPose,
    /// Seed of the estimator's random stream (MC-Dropout masks).
    pub seed: u64,
    pub observation: ObservationConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            max_steps: 0,
            start: StartPose::default(),
            seed: 0,
            observation: ObservationConfig::default(),
        }
    }
}

impl EpisodeConfig {
    /// Enough steps to drive `laps` laps of `track` at the default speed.
    pub fn for_laps(track: &Track, laps: f64, dt: f64) -> Self {
        let steps = (laps * track.length() / (super::DEFAULT_SPEED * dt)).ceil() as usize;
        Self {
            dt,
            max_steps: steps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub observation: Vec<f64>,
    pub steering: f64,
    pub score: f64,
    pub off_track: bool,
    /// Signed distance from the centerline, meters.
    pub lateral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub dt: f64,
    pub track_id: String,
    pub lane_half_width: f64,
    pub perturbation: PerturbationSpec,
    pub model_id: String,
    pub estimator_id: Option<String>,
    pub seed: u64,
    /// Net arc length driven, meters.
    pub progress: f64,
    /// Diagnostic when the episode ended before `max_steps`.
    pub terminated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub records: Vec<FrameRecord>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Frames at which the vehicle left the lane. The vehicle is reset right
    /// after each, so every off-track frame is an onset.
    pub fn failure_onsets(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(i, r)| r.off_track && (*i == 0 || !self.records[i - 1].off_track))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn off_track_frames(&self) -> usize {
        self.records.iter().filter(|r| r.off_track).count()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn score_series(&self) -> Result<ScoreSeries> {
        ScoreSeries::new(
            self.scores(),
            self.records.iter().map(|r| r.t).collect(),
            self.meta.estimator_id.clone().unwrap_or_default(),
            alloc::format!("{}-{}", self.meta.track_id, self.meta.seed),
        )
    }

    pub fn laps(&self, track_length: f64) -> f64 {
        self.meta.progress / track_length
    }
}

/// Closed-loop episode: observe, score, steer, step. A frame is off-track
/// when `|lateral| > lane_half_width`; the vehicle is then placed back on
/// the nearest centerline point, aligned with the track, and driving
/// continues.
pub fn run_episode(
    controller: &dyn Controller,
    track: &Track,
    spec: &PerturbationSpec,
    estimator: Option<&dyn Scorer>,
    cfg: &EpisodeConfig,
) -> Result<SimTrace> {
    spec.validate()?;
    if !(cfg.dt > 0.0) {
        return Err(Error::Precondition(alloc::format!(
            "time step must be positive, got {}",
            cfg.dt
        )));
    }
    let mut perturb_rng = crate::rng_from_seed(spec.seed);
    let mut score_rng = crate::rng_from_seed(cfg.seed ^ 0x5eed_5c0e);
    let hw = track.lane_half_width();
    let mut meta = TraceMeta {
        dt: cfg.dt,
        track_id: track.id().into(),
        lane_half_width: hw,
        perturbation: spec.clone(),
        model_id: controller.id(),
        estimator_id: estimator.map(|e| e.id()),
        seed: cfg.seed,
        progress: 0.0,
        terminated: None,
    };
    let mut records = Vec::with_capacity(cfg.max_steps);
    let mut state = VehicleState::on_track(
        track,
        cfg.start.arc,
        cfg.start.lateral,
        cfg.start.heading_offset,
    );
    let mut last_arc = track.project(state.position()).arc;

    for k in 0..cfg.max_steps {
        let proj = track.project(state.position());
        meta.progress += track.arc_delta(last_arc, proj.arc);
        last_arc = proj.arc;
        let obs = match observe(&state, track, spec, &cfg.observation, &mut perturb_rng) {
            Ok(o) => o,
            Err(e @ Error::Lost(_)) => {
                log::warn!("episode {} terminated at frame {k}: {e}", cfg.seed);
                meta.terminated = Some(alloc::format!("frame {k}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let score = match estimator {
            Some(est) => est.score(&obs.features, &mut score_rng)?,
            None => 0.0,
        };
        let raw = controller.steer(&Frame {
            state: &state,
            track,
            observation: &obs.features,
        })?;
        if !raw.is_finite() {
            return Err(Error::Input(alloc::format!(
                "controller produced {raw} at frame {k}"
            )));
        }
        let steering = raw.clamp(-MAX_STEERING, MAX_STEERING);
        let off_track = proj.lateral.abs() > hw;
        records.push(FrameRecord {
            t: k as f64 * cfg.dt,
            observation: obs.features,
            steering,
            score,
            off_track,
            lateral: proj.lateral,
        });
        state = if off_track {
            VehicleState {
                speed: state.speed,
                wheelbase: state.wheelbase,
                ..VehicleState::on_track(track, proj.arc, 0.0, 0.0)
            }
        } else {
            step(&state, steering, cfg.dt)?
        };
    }
    Ok(SimTrace { meta, records })
}

/// Observed frames per second: `(n − 1) / (t_last − t_first)`.
pub fn frame_rate(trace: &SimTrace) -> Result<f64> {
    let n = trace.records.len();
    if n < 2 {
        return Err(Error::InsufficientData(alloc::format!(
            "frame rate needs 2 records, got {n}"
        )));
    }
    let span = trace.records[n - 1].t - trace.records[0].t;
    if !(span > 0.0) {
        return Err(Error::InsufficientData("trace spans no time".into()));
    }
    Ok((n - 1) as f64 / span)
}

/// Frames in a detection window of `seconds`: `round(fps · seconds)`, at least 1.
pub fn window_len_frames(fps: f64, seconds: f64) -> usize {
    ((fps * seconds).round() as usize).max(1)
}
