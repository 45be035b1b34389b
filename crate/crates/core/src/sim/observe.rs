use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_not_lost, wrap_angle, Track, VehicleState};
use crate::{Error, Result};

/// Lookahead arc distances of the lateral features, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub lookaheads: Vec<f64>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            lookaheads: (1..=8).map(|k| 2.0 * k as f64).collect(),
        }
    }
}

impl ObservationConfig {
    pub fn dim(&self) -> usize {
        self.lookaheads.len() + 1
    }
}

/// Feature vector: for each lookahead distance, the lateral position of the
/// centerline point that far ahead, in the vehicle frame, divided by the lane
/// half width; last, the heading error (track tangent minus vehicle heading).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
}

impl Observation {
    pub fn lateral(&self) -> &[f64] {
        &self.features[..self.features.len() - 1]
    }

    pub fn heading_error(&self) -> f64 {
        self.features[self.features.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    None,
    AdditiveNoise,
    ContrastFade,
    ChannelOcclusion,
    BiasShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Nominal,
    Moderate,
    Extreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub intensity: f64,
}

/// Corruption applied to every observation of an episode. Components are
/// applied in order; a nominal spec has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub tier: Tier,
    pub components: Vec<Perturbation>,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn nominal() -> Self {
        Self {
            tier: Tier::Nominal,
            components: Vec::new(),
            seed: 0,
        }
    }

    pub fn new(tier: Tier, components: Vec<Perturbation>, seed: u64) -> Result<Self> {
        let spec = Self {
            tier,
            components,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let active = self
            .components
            .iter()
            .any(|p| p.kind != PerturbationKind::None);
        if self.tier == Tier::Nominal && active {
            return Err(Error::Config(
                "a nominal tier carries no perturbation".into(),
            ));
        }
        for p in &self.components {
            if !(p.intensity >= 0.0) || !p.intensity.is_finite() {
                return Err(Error::Config(alloc::format!(
                    "intensity {} must be >= 0",
                    p.intensity
                )));
            }
            let capped = matches!(
                p.kind,
                PerturbationKind::ContrastFade | PerturbationKind::ChannelOcclusion
            );
            if capped && p.intensity > 1.0 {
                return Err(Error::Config(alloc::format!(
                    "{:?} intensity must be <= 1",
                    p.kind
                )));
            }
        }
        Ok(())
    }

    pub fn is_nominal(&self) -> bool {
        self.components
            .iter()
            .all(|p| p.kind == PerturbationKind::None || p.intensity == 0.0)
    }

    /// Applies the corruption in place. Only the lookahead features are
    /// subject to occlusion; the others act on every feature.
    pub fn apply(&self, features: &mut [f64], rng: &mut dyn RngCore) {
        let k = features.len() - 1;
        for p in &self.components {
            match p.kind {
                PerturbationKind::None => {}
                PerturbationKind::AdditiveNoise => {
                    for f in features.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *f += p.intensity * z;
                    }
                }
                PerturbationKind::ContrastFade => {
                    for f in features.iter_mut() {
                        *f *= 1.0 - p.intensity;
                    }
                }
                PerturbationKind::ChannelOcclusion => {
                    let count = ((p.intensity * k as f64).ceil() as usize).min(k);
                    for i in rand::seq::index::sample(rng, k, count) {
                        features[i] = 0.0;
                    }
                }
                PerturbationKind::BiasShift => {
                    for f in features.iter_mut() {
                        *f += p.intensity;
                    }
                }
            }
        }
    }
}

/// Clean geometric features at `state`.
pub fn clean_features(
    state: &VehicleState,
    track: &Track,
    cfg: &ObservationConfig,
) -> Result<Vec<f64>> {
    let proj = track.project(state.position());
    check_not_lost(track, &proj)?;
    let (s, c) = state.heading.sin_cos();
    let hw = track.lane_half_width();
    let mut features = Vec::with_capacity(cfg.dim());
    for &d in &cfg.lookaheads {
        let p = track.point_at(proj.arc + d);
        let dx = p[0] - state.x;
        let dy = p[1] - state.y;
        features.push((-s * dx + c * dy) / hw);
    }
    features.push(wrap_angle(track.heading_at(proj.arc) - state.heading));
    Ok(features)
}

/// Observation under a perturbation, drawing randomness from `rng`.
pub fn observe(
    state: &VehicleState,
    track: &Track,
    spec: &PerturbationSpec,
    cfg: &ObservationConfig,
    rng: &mut dyn RngCore,
) -> Result<Observation> {
    let mut features = clean_features(state, track, cfg)?;
    spec.apply(&mut features, rng);
    Ok(Observation { features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::step;
    use alloc::vec;

    fn spec(kind: PerturbationKind, intensity: f64, tier: Tier) -> PerturbationSpec {
        PerturbationSpec::new(tier, vec![Perturbation { kind, intensity }], 1).unwrap()
    }

    #[test]
    fn clean_on_straight_centerline_is_zero() {
        let t = Track::circle(1e4, 2.0).unwrap();
        // On a huge circle the local geometry is straight to within 1e-2 m.
        let s = VehicleState::on_track(&t, 0.0, 0.0, 0.0);
        let mut rng = crate::rng_from_seed(0);
        let o = observe(
            &s,
            &t,
            &PerturbationSpec::nominal(),
            &ObservationConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(o.features.len(), 9);
        for f in &o.features {
            assert!(f.abs() < 1e-2, "{f}");
        }
    }

    #[test]
    fn full_fade_zeroes_everything() {
        let t = Track::default_course();
        let mut s = VehicleState::on_track(&t, 30.0, 0.8, 0.1);
        let mut rng = crate::rng_from_seed(0);
        let fade = spec(PerturbationKind::ContrastFade, 1.0, Tier::Extreme);
        for _ in 0..20 {
            let o = observe(&s, &t, &fade, &ObservationConfig::default(), &mut rng).unwrap();
            assert!(o.features.iter().all(|f| *f == 0.0));
            s = step(&s, 0.05, 0.05).unwrap();
        }
    }

    #[test]
    fn additive_noise_variance() {
        let t = Track::default_course();
        let s = VehicleState::on_track(&t, 10.0, 0.3, 0.0);
        let cfg = ObservationConfig::default();
        let clean = clean_features(&s, &t, &cfg).unwrap();
        let noisy = spec(PerturbationKind::AdditiveNoise, 0.3, Tier::Moderate);
        let mut rng = crate::rng_from_seed(17);
        let n = 10_000;
        let mut sum = [0.0; 9];
        let mut sum2 = [0.0; 9];
        for _ in 0..n {
            let o = observe(&s, &t, &noisy, &cfg, &mut rng).unwrap();
            for i in 0..9 {
                let d = o.features[i] - clean[i];
                sum[i] += d;
                sum2[i] += d * d;
            }
        }
        for i in 0..9 {
            let mean = sum[i] / n as f64;
            let var = (sum2[i] - n as f64 * mean * mean) / (n - 1) as f64;
            assert!((0.085..=0.095).contains(&var), "feature {i}: {var}");
        }
    }

    #[test]
    fn occlusion_zeroes_ceil_fraction_of_lookaheads() {
        let mut rng = crate::rng_from_seed(3);
        let occ = spec(PerturbationKind::ChannelOcclusion, 0.3, Tier::Moderate);
        for _ in 0..50 {
            let mut f = vec![1.0; 9];
            occ.apply(&mut f, &mut rng);
            assert_eq!(f[..8].iter().filter(|v| **v == 0.0).count(), 3);
            assert_eq!(f[8], 1.0);
        }
    }

    #[test]
    fn bias_shift_adds_constant() {
        let mut rng = crate::rng_from_seed(3);
        let mut f = vec![0.5, -0.5, 0.0];
        spec(PerturbationKind::BiasShift, 0.2, Tier::Extreme).apply(&mut f, &mut rng);
        assert_eq!(f, vec![0.7, -0.3, 0.2]);
    }

    #[test]
    fn nominal_tier_rejects_perturbation() {
        let bad = PerturbationSpec::new(
            Tier::Nominal,
            vec![Perturbation {
                kind: PerturbationKind::BiasShift,
                intensity: 0.1,
            }],
            0,
        );
        assert!(bad.is_err());
        assert!(PerturbationSpec::new(
            Tier::Extreme,
            vec![Perturbation {
                kind: PerturbationKind::ContrastFade,
                intensity: 1.5
            }],
            0
        )
        .is_err());
    }
}
