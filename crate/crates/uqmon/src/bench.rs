//! Per-frame latency and parameter footprint of each estimator.

use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uqmon_core::nnet::{init_regressor, Regressor, CONTROLLER_DIMS};
use uqmon_core::rng_from_seed;
use uqmon_core::sim::{clean_features, ObservationConfig};
use uqmon_core::uq::{
    AutoencoderScorer, Ensemble, McDropout, McdConfig, Scorer, UncertaintyEstimate,
};

use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::study::{course, derive_seed, random_start, ModelSet};

/// Frames that must remain after the warmup is discarded.
pub const MIN_MEASURED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    /// Single-threaded.
    Serial,
    /// Ensemble members evaluated concurrently, reduced in member order.
    Parallel,
}

pub enum BenchEstimator {
    Mcd(McDropout),
    De(Ensemble),
    Autoencoder(AutoencoderScorer),
}

impl BenchEstimator {
    pub fn id(&self) -> String {
        match self {
            BenchEstimator::Mcd(m) => m.id(),
            BenchEstimator::De(e) => e.id(),
            BenchEstimator::Autoencoder(_) => "ae".into(),
        }
    }

    /// Ensemble size or sample count.
    pub fn size(&self) -> usize {
        match self {
            BenchEstimator::Mcd(m) => m.forward_passes(),
            BenchEstimator::De(e) => e.len(),
            BenchEstimator::Autoencoder(_) => 1,
        }
    }

    pub fn parameter_bytes(&self) -> usize {
        let params = match self {
            BenchEstimator::Mcd(m) => m.parameter_count(),
            BenchEstimator::De(e) => Scorer::parameter_count(e),
            BenchEstimator::Autoencoder(a) => a.parameter_count(),
        };
        params * std::mem::size_of::<f64>()
    }

    fn frame(&self, mode: BenchMode, input: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        Ok(match (self, mode) {
            (BenchEstimator::Mcd(m), BenchMode::Serial) => m.score(input, rng)?,
            (BenchEstimator::De(e), BenchMode::Serial) => e.score(input, rng)?,
            (BenchEstimator::Autoencoder(a), BenchMode::Serial) => a.score(input, rng)?,
            (BenchEstimator::De(e), BenchMode::Parallel) => {
                let preds: Vec<f64> = e
                    .members()
                    .par_iter()
                    .map(|m| m.predict(input))
                    .collect::<uqmon_core::Result<_>>()?;
                UncertaintyEstimate::from_predictions(preds)?.variance
            }
            (_, BenchMode::Parallel) => {
                return Err(Error::Config(format!("{} has no parallel mode", self.id())));
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub estimator: String,
    pub size: usize,
    pub mode: BenchMode,
    pub inputs: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub param_bytes: usize,
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times every frame of `inputs` after discarding the first `warmup`.
pub fn measure_latency(
    est: &BenchEstimator,
    inputs: &[Vec<f64>],
    warmup: usize,
    mode: BenchMode,
    seed: u64,
) -> Result<BenchReport> {
    if inputs.len() < warmup + MIN_MEASURED {
        return Err(uqmon_core::Error::InsufficientData(format!(
            "{} inputs leave fewer than {MIN_MEASURED} frames after {warmup} warmup frames",
            inputs.len()
        ))
        .into());
    }
    let mut rng = rng_from_seed(seed);
    let mut sink = 0.0;
    for x in &inputs[..warmup] {
        sink += est.frame(mode, x, &mut rng)?;
    }
    let mut ms = Vec::with_capacity(inputs.len() - warmup);
    for x in &inputs[warmup..] {
        let t = Instant::now();
        sink += est.frame(mode, x, &mut rng)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    std::hint::black_box(sink);
    ms.sort_by(f64::total_cmp);
    Ok(BenchReport {
        estimator: est.id(),
        size: est.size(),
        mode,
        inputs: ms.len(),
        warmup,
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        median_ms: median(&ms),
        p95_ms: percentile(&ms, 0.95),
        param_bytes: est.parameter_bytes(),
    })
}

/// Clean observations at random poses on the course.
pub fn bench_inputs(n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let track = course();
    let cfg = ObservationConfig::default();
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let s = random_start(&track, &mut rng, 1.0, 0.1);
            Ok(clean_features(&s, &track, &cfg)?)
        })
        .collect()
}

/// Median over repetitions of each statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: String,
    pub family: String,
    pub size: usize,
    pub mode: BenchMode,
    pub repetitions: usize,
    pub inputs: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub param_bytes: usize,
    /// Members created untrained to reach the requested size.
    pub filler_members: usize,
}

fn repeat(
    est: &BenchEstimator,
    family: &str,
    mode: BenchMode,
    inputs: &[Vec<f64>],
    cfg: &StudyConfig,
    filler_members: usize,
) -> Result<BenchRow> {
    let b = &cfg.bench;
    let reps: Vec<BenchReport> = (0..b.repetitions)
        .map(|r| {
            measure_latency(
                est,
                inputs,
                b.warmup,
                mode,
                derive_seed(cfg.seed, &["bench-rep", &r.to_string()]),
            )
        })
        .collect::<Result<_>>()?;
    let med = |f: fn(&BenchReport) -> f64| {
        let mut v: Vec<f64> = reps.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        median(&v)
    };
    Ok(BenchRow {
        estimator: est.id(),
        family: family.into(),
        size: est.size(),
        mode,
        repetitions: reps.len(),
        inputs: reps[0].inputs,
        warmup: b.warmup,
        mean_ms: med(|r| r.mean_ms),
        median_ms: med(|r| r.median_ms),
        p95_ms: med(|r| r.p95_ms),
        param_bytes: est.parameter_bytes(),
        filler_members,
    })
}

/// Ensemble of `n` members: the trained ones first, then untrained networks
/// of the same shape. Latency does not depend on the weights.
pub fn bench_ensemble(models: &ModelSet, n: usize, cfg: &StudyConfig) -> Result<(Ensemble, usize)> {
    let mut members: Vec<Regressor> = models.members.iter().take(n).cloned().collect();
    let filler = n - members.len();
    for k in 0..filler {
        let seed = 1_000_000 + derive_seed(cfg.seed, &["bench-member", &k.to_string()]) % 1_000_000;
        members.push(init_regressor(
            &CONTROLLER_DIMS,
            cfg.grids.member_dropout_rate,
            seed,
        )?);
    }
    Ok((Ensemble::new(members)?, filler))
}

/// Every configured estimator, DE in both modes.
pub fn run_bench(cfg: &StudyConfig, models: &ModelSet) -> Result<Vec<BenchRow>> {
    let inputs = bench_inputs(cfg.bench.inputs, derive_seed(cfg.seed, &["bench-inputs"]))?;
    let mut rows = Vec::new();
    for &n in &cfg.bench.ensemble_sizes {
        let (ens, filler) = bench_ensemble(models, n, cfg)?;
        let est = BenchEstimator::De(ens);
        for mode in [BenchMode::Serial, BenchMode::Parallel] {
            rows.push(repeat(&est, "de", mode, &inputs, cfg, filler)?);
        }
    }
    let controller = models
        .primary_controller()
        .ok_or_else(|| Error::Config("no solid controller to benchmark".into()))?;
    for &s in &cfg.bench.mcd_samples {
        let est = BenchEstimator::Mcd(McDropout::new(controller.clone(), McdConfig::new(s))?);
        rows.push(repeat(&est, "mcd", BenchMode::Serial, &inputs, cfg, 0)?);
    }
    if let Some(ae) = &models.autoencoder {
        let est = BenchEstimator::Autoencoder(AutoencoderScorer::new(ae.clone())?);
        rows.push(repeat(&est, "ae", BenchMode::Serial, &inputs, cfg, 0)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble(n: usize) -> BenchEstimator {
        let members = (0..n)
            .map(|k| init_regressor(&CONTROLLER_DIMS, 0.05, k as u64).unwrap())
            .collect();
        BenchEstimator::De(Ensemble::new(members).unwrap())
    }

    #[test]
    fn warmup_must_leave_enough_frames() {
        let inputs = bench_inputs(120, 1).unwrap();
        let e = ensemble(2);
        assert!(measure_latency(&e, &inputs, 120, BenchMode::Serial, 0).is_err());
        assert!(measure_latency(&e, &inputs, 30, BenchMode::Serial, 0).is_err());
        let r = measure_latency(&e, &inputs, 20, BenchMode::Serial, 0).unwrap();
        assert_eq!(r.inputs, 100);
        assert!(r.median_ms > 0.0 && r.p95_ms >= r.median_ms);
    }

    #[test]
    fn parameter_bytes_scale_with_members() {
        let single = init_regressor(&CONTROLLER_DIMS, 0.05, 0)
            .unwrap()
            .parameter_count()
            * 8;
        for n in [2, 5, 10] {
            assert_eq!(ensemble(n).parameter_bytes(), n * single);
        }
        let mcd = McDropout::new(
            init_regressor(&CONTROLLER_DIMS, 0.05, 0).unwrap(),
            McdConfig::new(128),
        )
        .unwrap();
        assert_eq!(BenchEstimator::Mcd(mcd).parameter_bytes(), single);
    }

    #[test]
    fn parallel_mode_matches_serial_scores() {
        let e = ensemble(7);
        let x = bench_inputs(3, 2).unwrap();
        let mut rng = rng_from_seed(0);
        for input in &x {
            let a = e.frame(BenchMode::Serial, input, &mut rng).unwrap();
            let b = e.frame(BenchMode::Parallel, input, &mut rng).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(median(&v), 10.5);
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&v[..1], 0.95), 1.0);
    }
}
