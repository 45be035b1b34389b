use crate::sim::{run_episode, Controller, EpisodeConfig, PerturbationSpec, Track, DEFAULT_DT};
use crate::{Error, Result};

/// Admission filter: a deterministic nominal run must complete `laps` laps
/// without a single off-track frame.
pub fn is_solid(controller: &dyn Controller, track: &Track, laps: u32) -> Result<bool> {
    if laps < 2 {
        return Err(Error::Precondition(alloc::format!(
            "solidity needs at least 2 laps, got {laps}"
        )));
    }
    let mut cfg = EpisodeConfig::for_laps(track, laps as f64, DEFAULT_DT);
    // A little slack for the heading transient at the start.
    cfg.max_steps += cfg.max_steps / 20;
    let trace = run_episode(controller, track, &PerturbationSpec::nominal(), None, &cfg)?;
    let completed =
        trace.meta.terminated.is_none() && trace.meta.progress >= laps as f64 * track.length();
    Ok(completed && trace.off_track_frames() == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::init_regressor;
    use crate::sim::Expert;

    #[test]
    fn expert_is_solid() {
        let track = Track::default_course();
        assert!(is_solid(&Expert::default(), &track, 2).unwrap());
    }

    #[test]
    fn random_model_is_not_solid() {
        let track = Track::default_course();
        for seed in 0..3 {
            let m = init_regressor(&[9, 32, 16, 1], 0.05, seed).unwrap();
            assert!(!is_solid(&m, &track, 2).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn rejects_degenerate_lap_count() {
        let track = Track::default_course();
        assert!(matches!(
            is_solid(&Expert::default(), &track, 0),
            Err(Error::Precondition(_))
        ));
    }
}
