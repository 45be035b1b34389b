//! Study configuration, read from a single TOML file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqmon_core::monitor::CONFIDENCE_GRID;
use uqmon_core::nnet::{check_dropout_rate, TrainingConfig};
use uqmon_core::sim::{
    MutationKind, MutationOp, Perturbation, PerturbationKind, PerturbationSpec, Tier,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Base seed; every other stream is derived from it.
    pub seed: u64,
    pub paths: Paths,
    pub grids: Grids,
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub simulation: SimulationConfig,
    pub benchmarks: Vec<BenchmarkRecipe>,
    pub bench: BenchConfig,
}

/// Output subdirectories, relative to the `--out` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tracks: PathBuf,
    pub models: PathBuf,
    pub traces: PathBuf,
    pub calibration: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            tracks: "tracks".into(),
            models: "models".into(),
            traces: "traces".into(),
            calibration: "calibration".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// One MC-Dropout controller is trained per rate.
    pub dropout_rates: Vec<f64>,
    pub mcd_samples: Vec<usize>,
    pub ensemble_sizes: Vec<usize>,
    pub confidences: Vec<f64>,
    /// Episode seeds of every benchmark.
    pub seeds: Vec<u64>,
    pub dt: Vec<f64>,
    /// Training-time dropout of ensemble members.
    pub member_dropout_rate: f64,
    /// Also evaluate the reconstruction-error baseline.
    pub autoencoder: bool,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            dropout_rates: vec![0.05],
            mcd_samples: vec![32],
            ensemble_sizes: vec![5],
            confidences: CONFIDENCE_GRID.to_vec(),
            seeds: (1..=10).collect(),
            dt: vec![0.05],
            member_dropout_rate: 0.05,
            autoencoder: true,
        }
    }
}

/// Expert rollouts used as the behavioral-cloning dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub rollouts_per_track: usize,
    pub steps_per_rollout: usize,
    /// Stationary std of the steering noise injected while recording, radians.
    pub steering_noise: f64,
    /// Per-step correlation of that noise.
    pub noise_correlation: f64,
    pub dt: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            rollouts_per_track: 4,
            steps_per_rollout: 2500,
            steering_noise: 0.08,
            noise_correlation: 0.95,
            dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Steps of each benchmark and nominal evaluation episode.
    pub steps: usize,
    /// Steps of the nominal episode each threshold is calibrated on.
    pub calibration_steps: usize,
    pub start_lateral_spread: f64,
    pub start_heading_spread: f64,
    /// Laps a controller must drive cleanly to be admitted.
    pub solid_laps: u32,
    /// Ensemble member seeds tried per requested member before giving up.
    pub member_attempts: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            calibration_steps: 12000,
            start_lateral_spread: 0.5,
            start_heading_spread: 0.05,
            solid_laps: 2,
            member_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecipe {
    pub name: String,
    #[serde(flatten)]
    pub kind: RecipeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RecipeKind {
    /// Unseen conditions: the nominal system drives corrupted observations.
    Ood {
        tier: Tier,
        perturbations: Vec<Perturbation>,
    },
    /// Faulty systems: every mutation yields one mutant driving nominal
    /// conditions.
    Mutants { mutations: Vec<MutationRecipe> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRecipe {
    #[serde(flatten)]
    pub kind: MutationKind,
    pub magnitude: f64,
}

impl MutationRecipe {
    pub fn op(&self, seed: u64) -> MutationOp {
        MutationOp {
            kind: self.kind,
            magnitude: self.magnitude,
            seed,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            MutationKind::WeightGaussianFuzz => format!("fuzz{}", self.magnitude),
            MutationKind::LabelNoiseRetrain { fraction } => {
                format!("labelnoise{}x{}", self.magnitude, fraction)
            }
            MutationKind::UnderTraining => format!("undertrain{}", self.magnitude),
        }
    }
}

impl BenchmarkRecipe {
    pub fn spec(&self, seed: u64) -> Result<PerturbationSpec> {
        Ok(match &self.kind {
            RecipeKind::Ood {
                tier,
                perturbations,
            } => PerturbationSpec::new(*tier, perturbations.clone(), seed)?,
            RecipeKind::Mutants { .. } => PerturbationSpec::nominal().with_seed(seed),
        })
    }
}

/// The shipped recipes.
pub fn default_benchmarks() -> Vec<BenchmarkRecipe> {
    let noise = |intensity| Perturbation {
        kind: PerturbationKind::AdditiveNoise,
        intensity,
    };
    vec![
        BenchmarkRecipe {
            name: "ood-moderate".into(),
            kind: RecipeKind::Ood {
                tier: Tier::Moderate,
                perturbations: vec![noise(1.3)],
            },
        },
        BenchmarkRecipe {
            name: "ood-extreme".into(),
            kind: RecipeKind::Ood {
                tier: Tier::Extreme,
                perturbations: vec![
                    noise(1.5),
                    Perturbation {
                        kind: PerturbationKind::BiasShift,
                        intensity: 0.1,
                    },
                ],
            },
        },
        BenchmarkRecipe {
            name: "mutants".into(),
            kind: RecipeKind::Mutants {
                mutations: vec![
                    MutationRecipe {
                        kind: MutationKind::WeightGaussianFuzz,
                        magnitude: 0.15,
                    },
                    MutationRecipe {
                        kind: MutationKind::LabelNoiseRetrain { fraction: 0.3 },
                        magnitude: 0.3,
                    },
                    MutationRecipe {
                        kind: MutationKind::UnderTraining,
                        magnitude: 1.0,
                    },
                ],
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub inputs: usize,
    pub warmup: usize,
    pub repetitions: usize,
    pub ensemble_sizes: Vec<usize>,
    pub mcd_samples: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            inputs: 400,
            warmup: 40,
            repetitions: 3,
            ensemble_sizes: vec![2, 5, 10, 50],
            mcd_samples: vec![2, 32, 128],
        }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            paths: Paths::default(),
            grids: Grids::default(),
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            simulation: SimulationConfig::default(),
            benchmarks: default_benchmarks(),
            bench: BenchConfig::default(),
        }
    }
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("grid `{name}` is empty")));
    }
    Ok(())
}

fn distinct<T: Ord + Copy + std::fmt::Debug>(name: &str, v: &[T]) -> Result<()> {
    let set: BTreeSet<T> = v.iter().copied().collect();
    if set.len() != v.len() {
        return Err(Error::Config(format!(
            "grid `{name}` has duplicates: {v:?}"
        )));
    }
    Ok(())
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grids;
        non_empty("dropout_rates", &g.dropout_rates)?;
        non_empty("mcd_samples", &g.mcd_samples)?;
        non_empty("ensemble_sizes", &g.ensemble_sizes)?;
        non_empty("confidences", &g.confidences)?;
        non_empty("seeds", &g.seeds)?;
        non_empty("dt", &g.dt)?;
        for &r in g.dropout_rates.iter().chain([&g.member_dropout_rate]) {
            check_dropout_rate(r)?;
        }
        if g.mcd_samples.contains(&0) {
            return Err(Error::Config("MC-Dropout needs at least one sample".into()));
        }
        if let Some(n) = g.ensemble_sizes.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("ensemble size {n} < 2")));
        }
        if let Some(c) = g.confidences.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::Config(format!("confidence {c} outside (0,1)")));
        }
        if g.confidences.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "confidences must be strictly increasing".into(),
            ));
        }
        if let Some(dt) = g.dt.iter().find(|dt| !(**dt > 0.0)) {
            return Err(Error::Config(format!("dt {dt} must be positive")));
        }
        distinct("seeds", &g.seeds)?;
        distinct("mcd_samples", &g.mcd_samples)?;
        distinct("ensemble_sizes", &g.ensemble_sizes)?;

        let p = &self.paths;
        let all = [&p.tracks, &p.models, &p.traces, &p.calibration, &p.reports];
        let unique: BTreeSet<&PathBuf> = all.iter().copied().collect();
        if unique.len() != all.len() {
            return Err(Error::Config("output paths must be distinct".into()));
        }

        self.training.validate()?;
        if !(self.training.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.data.rollouts_per_track == 0
            || self.data.steps_per_rollout == 0
            || !(self.data.dt > 0.0)
        {
            return Err(Error::Config(
                "data generation needs rollouts, steps and dt > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.data.noise_correlation) || !(self.data.steering_noise >= 0.0)
        {
            return Err(Error::Config(
                "noise correlation must be in [0,1), noise std >= 0".into(),
            ));
        }
        let s = &self.simulation;
        if s.steps == 0 || s.calibration_steps == 0 || s.member_attempts == 0 {
            return Err(Error::Config(
                "episode lengths and member attempts must be positive".into(),
            ));
        }
        if s.solid_laps < 2 {
            return Err(Error::Config("solidity needs at least 2 laps".into()));
        }

        non_empty("benchmarks", &self.benchmarks)?;
        let names: BTreeSet<&str> = self.benchmarks.iter().map(|b| b.name.as_str()).collect();
        if names.len() != self.benchmarks.len() {
            return Err(Error::Config("benchmark names must be distinct".into()));
        }
        for b in &self.benchmarks {
            if b.name.is_empty()
                || !b
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::Config(format!(
                    "benchmark name {:?} must be [A-Za-z0-9_-]+",
                    b.name
                )));
            }
            match &b.kind {
                RecipeKind::Ood { tier, .. } => {
                    if *tier == Tier::Nominal {
                        return Err(Error::Config(format!(
                            "{}: OOD recipes need a non-nominal tier",
                            b.name
                        )));
                    }
                    b.spec(0)?;
                }
                RecipeKind::Mutants { mutations } => {
                    non_empty(&b.name, mutations)?;
                    for m in mutations {
                        m.op(0).validate()?;
                    }
                }
            }
        }

        let bench = &self.bench;
        if bench.inputs < 100 {
            return Err(Error::Config(
                "bench needs at least 100 measured inputs".into(),
            ));
        }
        if bench.repetitions == 0 {
            return Err(Error::Config("bench repetitions must be positive".into()));
        }
        if bench.ensemble_sizes.iter().any(|&n| n < 2) || bench.mcd_samples.contains(&0) {
            return Err(Error::Config("bench grids need N >= 2 and S >= 1".into()));
        }
        Ok(())
    }

    pub fn max_ensemble_size(&self) -> usize {
        self.grids.ensemble_sizes.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = StudyConfig::default();
        cfg.validate().unwrap();
        let back = StudyConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(StudyConfig::from_toml("").unwrap(), StudyConfig::default());
    }

    #[test]
    fn rejects_high_dropout_rate() {
        let err = StudyConfig::from_toml("[grids]\ndropout_rates = [0.05, 0.45]\n").unwrap_err();
        assert!(matches!(err, Error::Core(uqmon_core::Error::DisregardedRate(r)) if r == 0.45));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_grids() {
        for text in [
            "[grids]\nseeds = []\n",
            "[grids]\nensemble_sizes = [1]\n",
            "[grids]\nconfidences = [0.99, 0.95]\n",
            "[grids]\nseeds = [1, 1]\n",
            "[paths]\nmodels = \"x\"\ntraces = \"x\"\n",
            "unknown = 3\n",
        ] {
            assert!(StudyConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn recipes_parse_from_toml() {
        let text = r#"
[[benchmarks]]
name = "fog"
kind = "ood"
tier = "moderate"
perturbations = [{ kind = "contrast-fade", intensity = 0.5 }]

[[benchmarks]]
name = "bugs"
kind = "mutants"
mutations = [
  { kind = "weight-gaussian-fuzz", magnitude = 0.2 },
  { kind = "label-noise-retrain", fraction = 0.5, magnitude = 0.1 },
]
"#;
        let cfg = StudyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.benchmarks.len(), 2);
        match &cfg.benchmarks[1].kind {
            RecipeKind::Mutants { mutations } => {
                assert_eq!(
                    mutations[1].kind,
                    MutationKind::LabelNoiseRetrain { fraction: 0.5 }
                );
            }
            other => panic!("{other:?}"),
        }
        let bad = text.replace("magnitude = 0.2", "magnitude = 9.0");
        assert!(StudyConfig::from_toml(&bad).is_err());
    }
}
