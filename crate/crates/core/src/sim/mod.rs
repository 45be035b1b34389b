//! Toy closed-loop lane-keeping world.
//!
//! A kinematic bicycle drives at constant speed around a closed [`Track`].
//! Controllers see an [`Observation`] of lookahead lateral offsets; the
//! expert uses pure pursuit on the true geometry. Perturbations corrupt the
//! observation (the out-of-distribution benchmarks) and mutations degrade
//! the controller itself.

mod episode;
mod mutation;
mod observe;
mod track;

use alloc::string::String;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use serde::{Deserialize, Serialize};

pub use episode::{
    frame_rate, run_episode, window_len_frames, EpisodeConfig, FrameRecord, SimTrace, StartPose,
    TraceMeta,
};
pub use mutation::{
    fuzz_weights, mutate, MutationKind, MutationOp, MAX_FUZZ, MAX_LABEL_NOISE,
    MAX_UNDER_TRAINING_EPOCHS,
};
pub use observe::{
    clean_features, observe, Observation, ObservationConfig, Perturbation, PerturbationKind,
    PerturbationSpec, Tier,
};
pub use track::{Projection, Track, DEFAULT_LANE_HALF_WIDTH, MAX_WAYPOINT_SPACING};

use crate::nnet::Regressor;
use crate::uq::Ensemble;
use crate::{Error, Result};

/// Steering magnitude bound, radians.
pub const MAX_STEERING: f64 = 0.5;
/// 30 mph in m/s.
pub const DEFAULT_SPEED: f64 = 13.4;
pub const DEFAULT_WHEELBASE: f64 = 2.5;
pub const DEFAULT_DT: f64 = 0.05;
/// Vehicles farther than this many lane widths from the centerline are lost.
pub const LOST_LANE_WIDTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub wheelbase: f64,
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
            speed: DEFAULT_SPEED,
            wheelbase: DEFAULT_WHEELBASE,
        }
    }

    /// State at arc `s`, offset `lateral` meters to the left, with the given
    /// heading error relative to the track tangent.
    pub fn on_track(track: &Track, s: f64, lateral: f64, heading_offset: f64) -> Self {
        let c = track.point_at(s);
        let h = track.heading_at(s);
        Self::new(
            c[0] - lateral * h.sin(),
            c[1] + lateral * h.cos(),
            h + heading_offset,
        )
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn mirrored(&self) -> Self {
        Self {
            y: -self.y,
            heading: wrap_angle(-self.heading),
            ..*self
        }
    }
}

/// Kinematic bicycle update with explicit Euler:
/// `x += v cosψ dt`, `y += v sinψ dt`, `ψ += (v/L) tanδ dt`.
pub fn step(state: &VehicleState, steering: f64, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(alloc::format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(steering.abs() <= MAX_STEERING + 1e-12) {
        return Err(Error::Precondition(alloc::format!(
            "steering {steering} exceeds ±{MAX_STEERING}"
        )));
    }
    let v = state.speed;
    Ok(VehicleState {
        x: state.x + v * state.heading.cos() * dt,
        y: state.y + v * state.heading.sin() * dt,
        heading: wrap_angle(state.heading + v / state.wheelbase * steering.tan() * dt),
        ..*state
    })
}

pub(crate) fn check_not_lost(track: &Track, proj: &Projection) -> Result<()> {
    let limit = LOST_LANE_WIDTHS * 2.0 * track.lane_half_width();
    if proj.distance > limit {
        return Err(Error::Lost(alloc::format!(
            "{:.2} m from the centerline of {} (limit {limit:.1} m)",
            proj.distance,
            track.id()
        )));
    }
    Ok(())
}

/// Everything a controller may look at for one frame.
pub struct Frame<'a> {
    pub state: &'a VehicleState,
    pub track: &'a Track,
    pub observation: &'a [f64],
}

/// Produces a steering command. Learned controllers read only the
/// observation; the expert reads the true geometry.
pub trait Controller {
    fn steer(&self, frame: &Frame<'_>) -> Result<f64>;
    fn id(&self) -> String;
}

impl Controller for Regressor {
    fn steer(&self, frame: &Frame<'_>) -> Result<f64> {
        self.predict(frame.observation)
    }

    fn id(&self) -> String {
        Regressor::id(self)
    }
}

/// The ensemble drives with its mixture mean.
impl Controller for Ensemble {
    fn steer(&self, frame: &Frame<'_>) -> Result<f64> {
        Ok(crate::uq::de_estimate(self, frame.observation)?.mean)
    }

    fn id(&self) -> String {
        alloc::format!("ensemble-{}", self.len())
    }
}

/// Pure-pursuit expert tracking the centerline point `lookahead` meters ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    pub lookahead: f64,
}

impl Default for Expert {
    fn default() -> Self {
        Self { lookahead: 6.0 }
    }
}

/// Pure-pursuit steering `atan(2 L sin α / ℓ)` toward the centerline point at
/// arc `s + lookahead`, clamped to ±[`MAX_STEERING`].
pub fn expert_steer(state: &VehicleState, track: &Track, lookahead: f64) -> Result<f64> {
    let proj = track.project(state.position());
    check_not_lost(track, &proj)?;
    let target = track.point_at(proj.arc + lookahead);
    let dx = target[0] - state.x;
    let dy = target[1] - state.y;
    let (s, c) = state.heading.sin_cos();
    let forward = c * dx + s * dy;
    let left = -s * dx + c * dy;
    let alpha = left.atan2(forward);
    let ld = (dx * dx + dy * dy).sqrt();
    let delta = (2.0 * state.wheelbase * alpha.sin() / ld).atan();
    Ok(delta.clamp(-MAX_STEERING, MAX_STEERING))
}

impl Controller for Expert {
    fn steer(&self, frame: &Frame<'_>) -> Result<f64> {
        expert_steer(frame.state, frame.track, self.lookahead)
    }

    fn id(&self) -> String {
        alloc::format!("expert-pp{}", self.lookahead)
    }
}
