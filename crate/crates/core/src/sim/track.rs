use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maximum distance between consecutive waypoints, meters.
pub const MAX_WAYPOINT_SPACING: f64 = 5.0;
pub const DEFAULT_LANE_HALF_WIDTH: f64 = 2.0;

/// Closed-loop centerline with a constant-width lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    id: String,
    points: Vec<[f64; 2]>,
    lane_half_width: f64,
    cumulative: Vec<f64>,
}

/// Nearest centerline point to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the nearest point, in `[0, length)`.
    pub arc: f64,
    /// Signed distance from the centerline, positive to the left of travel.
    pub lateral: f64,
    pub distance: f64,
}

impl Track {
    /// Builds a closed track. A repeated closing waypoint is dropped.
    pub fn from_waypoints(
        id: impl Into<String>,
        mut points: Vec<[f64; 2]>,
        lane_half_width: f64,
    ) -> Result<Self> {
        if !(lane_half_width > 0.0) {
            return Err(Error::Config(alloc::format!(
                "lane half width {lane_half_width}"
            )));
        }
        if points.len() >= 2 {
            let (first, last) = (points[0], points[points.len() - 1]);
            if dist(first, last) < 1e-9 {
                points.pop();
            }
        }
        if points.len() < 3 {
            return Err(Error::Config(
                "a closed track needs at least 3 distinct waypoints".into(),
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("waypoints must be finite".into()));
        }
        let n = points.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for i in 0..n {
            let d = dist(points[i], points[(i + 1) % n]);
            if !(d > 0.0) || d > MAX_WAYPOINT_SPACING {
                return Err(Error::Config(alloc::format!(
                    "waypoint spacing {d:.3} m at index {i} outside (0, {MAX_WAYPOINT_SPACING}]"
                )));
            }
            cumulative.push(cumulative[i] + d);
        }
        Ok(Self {
            id: id.into(),
            points,
            lane_half_width,
            cumulative,
        })
    }

    /// Counter-clockwise circle of the given radius.
    pub fn circle(radius: f64, lane_half_width: f64) -> Result<Self> {
        let n = ((2.0 * PI * radius) / 1.0).ceil().max(16.0) as usize;
        let points = (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self::from_waypoints(alloc::format!("circle-r{radius}"), points, lane_half_width)
    }

    /// Default course: a polar curve `r(φ) = 50 (1 + 0.15 sin 3φ)` with
    /// alternating left and right bends (tightest radius ≈ 26 m), ~320 m long.
    pub fn default_course() -> Self {
        let n = 400;
        let points = (0..n)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / n as f64;
                let r = 50.0 * (1.0 + 0.15 * (3.0 * phi).sin());
                [r * phi.cos(), r * phi.sin()]
            })
            .collect();
        Self::from_waypoints("course", points, DEFAULT_LANE_HALF_WIDTH)
            .expect("built-in course is valid")
    }

    /// Same centerline driven in the opposite direction.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self::from_waypoints(
            alloc::format!("{}-rev", self.id),
            points,
            self.lane_half_width,
        )
        .expect("reversal preserves validity")
    }

    /// Reflection across the x axis (`y → −y`), keeping waypoint order.
    pub fn mirrored(&self) -> Self {
        let points = self.points.iter().map(|p| [p[0], -p[1]]).collect();
        Self::from_waypoints(
            alloc::format!("{}-mirror", self.id),
            points,
            self.lane_half_width,
        )
        .expect("mirroring preserves validity")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn lane_half_width(&self) -> f64 {
        self.lane_half_width
    }

    pub fn length(&self) -> f64 {
        self.cumulative[self.points.len()]
    }

    pub fn wrap_arc(&self, s: f64) -> f64 {
        let len = self.length();
        let r = s % len;
        if r < 0.0 {
            r + len
        } else {
            r
        }
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_arc(s);
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
        .min(self.points.len() - 1);
        (i, s - self.cumulative[i])
    }

    /// Centerline point at arc length `s` (wrapped).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let (i, along) = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        let t = along / (self.cumulative[i + 1] - self.cumulative[i]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Tangent heading at arc length `s`, by central difference over 1 m.
    pub fn heading_at(&self, s: f64) -> f64 {
        let a = self.point_at(s - 0.5);
        let b = self.point_at(s + 0.5);
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    pub fn project(&self, p: [f64; 2]) -> Projection {
        let n = self.points.len();
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
            let c = [a[0] + t * d[0], a[1] + t * d[1]];
            let d2 = (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]);
            if d2 < best.0 {
                best = (d2, i, t);
            }
        }
        let (d2, i, t) = best;
        let a = self.points[i];
        let b = self.points[(i + 1) % n];
        let seg = [b[0] - a[0], b[1] - a[1]];
        let c = [a[0] + t * seg[0], a[1] + t * seg[1]];
        let cross = seg[0] * (p[1] - c[1]) - seg[1] * (p[0] - c[0]);
        let distance = d2.sqrt();
        let arc =
            self.wrap_arc(self.cumulative[i] + t * (self.cumulative[i + 1] - self.cumulative[i]));
        Projection {
            arc,
            lateral: if cross >= 0.0 { distance } else { -distance },
            distance,
        }
    }

    /// Signed arc advance from `from` to `to`, taking the short way around.
    pub fn arc_delta(&self, from: f64, to: f64) -> f64 {
        let len = self.length();
        let mut d = to - from;
        if d > 0.5 * len {
            d -= len;
        } else if d < -0.5 * len {
            d += len;
        }
        d
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
}
