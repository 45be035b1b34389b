//! In-memory pipeline: data, models, episodes, calibration and evaluation.
//!
//! The CLI wraps each stage with file IO; tests drive it directly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uqmon_core::eval::{
    compare_samples, evaluate_cell, label_windows, macro_average, DetectionWindowSet, EvalConfig,
    MetricRow, StatTestResult, TraceRole,
};
use uqmon_core::monitor::{fit_gamma, threshold_for, GammaFit};
use uqmon_core::nnet::{
    init_regressor, is_solid, train, train_autoencoder, Dataset, Provenance, Regressor,
};
use uqmon_core::sim::{
    clean_features, expert_steer, mutate, run_episode, step, Controller, EpisodeConfig,
    ObservationConfig, PerturbationSpec, SimTrace, StartPose, Track, VehicleState, MAX_STEERING,
};
use uqmon_core::uq::{AutoencoderScorer, Ensemble, McDropout, McdConfig, Scorer, AUTOENCODER_DIMS};
use uqmon_core::{nnet::CONTROLLER_DIMS, rng_from_seed};

use crate::config::{BenchmarkRecipe, MutationRecipe, RecipeKind, StudyConfig};
use crate::error::{Error, Result};

/// Mixes a base seed with string tags (FNV-1a, then a splitmix64 finalizer).
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for tag in tags {
        for b in tag.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The evaluation course.
pub fn course() -> Track {
    Track::default_course()
}

/// Expert rollouts with correlated steering noise so that the recorded
/// states include recoveries from off-center poses. Labels are always the
/// clean expert command.
pub fn generate_dataset(cfg: &StudyConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let obs_cfg = ObservationConfig::default();
    let base = course();
    let tracks = [base.clone(), base.reversed()];
    let innovation = d.steering_noise * (1.0 - d.noise_correlation * d.noise_correlation).sqrt();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    for track in &tracks {
        let hw = track.lane_half_width();
        for r in 0..d.rollouts_per_track {
            let mut rng =
                rng_from_seed(derive_seed(cfg.seed, &["data", track.id(), &r.to_string()]));
            let mut state = random_start(track, &mut rng, 0.6 * hw, 0.1);
            let mut noise = 0.0;
            for _ in 0..d.steps_per_rollout {
                let label = expert_steer(&state, track, 6.0)?;
                inputs.push(clean_features(&state, track, &obs_cfg)?);
                targets.push(label);
                noise = d.noise_correlation * noise
                    + innovation
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                state = step(
                    &state,
                    (label + noise).clamp(-MAX_STEERING, MAX_STEERING),
                    d.dt,
                )?;
                let proj = track.project(state.position());
                if proj.lateral.abs() > 0.9 * hw {
                    state = VehicleState::on_track(track, proj.arc, 0.0, 0.0);
                    noise = 0.0;
                }
            }
        }
    }
    Ok(Dataset::new(inputs, targets, Provenance::Nominal)?)
}

pub fn random_start(track: &Track, rng: &mut impl Rng, lateral: f64, heading: f64) -> VehicleState {
    let p = random_pose(track, rng, lateral, heading);
    VehicleState::on_track(track, p.arc, p.lateral, p.heading_offset)
}

fn random_pose(track: &Track, rng: &mut impl Rng, lateral: f64, heading: f64) -> StartPose {
    StartPose {
        arc: rng.random::<f64>() * track.length(),
        lateral: lateral * (2.0 * rng.random::<f64>() - 1.0),
        heading_offset: heading * (2.0 * rng.random::<f64>() - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidityEntry {
    pub role: String,
    pub model_id: String,
    pub solid: bool,
}

/// Every trained network of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    /// MC-Dropout controllers keyed by the bit pattern of their rate.
    pub controllers: BTreeMap<u64, Regressor>,
    /// Solid ensemble members, sorted by seed.
    pub members: Vec<Regressor>,
    pub autoencoder: Option<Regressor>,
    pub solidity: Vec<SolidityEntry>,
}

impl ModelSet {
    pub fn controller(&self, rate: f64) -> Option<&Regressor> {
        self.controllers.get(&rate.to_bits())
    }

    /// Controller the autoencoder baseline supervises: the lowest-rate one.
    pub fn primary_controller(&self) -> Option<&Regressor> {
        self.controllers
            .values()
            .min_by(|a, b| a.dropout_rate().total_cmp(&b.dropout_rate()))
    }
}

fn train_controller(data: &Dataset, cfg: &StudyConfig, rate: f64, seed: u64) -> Result<Regressor> {
    let model = init_regressor(&CONTROLLER_DIMS, rate, seed)?;
    let tcfg = uqmon_core::nnet::TrainingConfig {
        seed: derive_seed(cfg.seed, &["shuffle", &seed.to_string()]),
        ..cfg.training.clone()
    };
    Ok(train(&model, data, &tcfg)?.model)
}

fn model_seed(cfg: &StudyConfig, role: &str, k: usize) -> u64 {
    // Keep seeds small and readable in file names.
    derive_seed(cfg.seed, &[role, &k.to_string()]) % 1_000_000
}

/// Trains controllers for every dropout rate, ensemble members and the
/// autoencoder. Only solid controllers are kept; failures are logged.
pub fn train_models(cfg: &StudyConfig, data: &Dataset) -> Result<ModelSet> {
    let track = course();
    let laps = cfg.simulation.solid_laps;
    let attempts = cfg.simulation.member_attempts;
    let mut solidity = Vec::new();

    // Seeds are tried in order until one trains a solid controller.
    let rates = cfg.grids.dropout_rates.clone();
    let per_rate: Vec<(f64, Vec<(Regressor, bool)>)> = rates
        .par_iter()
        .map(|&rate| {
            let mut tried = Vec::new();
            for k in 0..attempts {
                let seed = model_seed(cfg, &format!("controller-{rate}"), k);
                let m = train_controller(data, cfg, rate, seed)?;
                let solid = is_solid(&m, &track, laps)?;
                tried.push((m, solid));
                if solid {
                    break;
                }
            }
            Ok((rate, tried))
        })
        .collect::<Result<_>>()?;
    let mut controllers = BTreeMap::new();
    for (rate, tried) in per_rate {
        for (m, solid) in tried {
            solidity.push(SolidityEntry {
                role: format!("controller p={rate}"),
                model_id: m.id(),
                solid,
            });
            if solid {
                controllers.insert(rate.to_bits(), m);
            }
        }
        if !controllers.contains_key(&rate.to_bits()) {
            log::warn!("no solid controller for dropout rate {rate}; grid point skipped");
        }
    }

    let want = cfg.max_ensemble_size();
    let mut members = Vec::new();
    let mut next = 0;
    while members.len() < want && next < want * attempts {
        let batch: Vec<usize> =
            (next..(next + want - members.len()).min(want * attempts)).collect();
        next += batch.len();
        let trained: Vec<(Regressor, bool)> = batch
            .par_iter()
            .map(|&k| {
                let m = train_controller(
                    data,
                    cfg,
                    cfg.grids.member_dropout_rate,
                    model_seed(cfg, "member", k),
                )?;
                let solid = is_solid(&m, &track, laps)?;
                Ok((m, solid))
            })
            .collect::<Result<_>>()?;
        for (m, solid) in trained {
            solidity.push(SolidityEntry {
                role: "ensemble member".into(),
                model_id: m.id(),
                solid,
            });
            if solid {
                members.push(m);
            }
        }
    }
    if members.len() < want {
        log::warn!(
            "only {} of {want} ensemble members are solid",
            members.len()
        );
    }
    members.sort_by_key(|m| m.seed());

    let autoencoder = if cfg.grids.autoencoder {
        let ae = init_regressor(&AUTOENCODER_DIMS, 0.0, model_seed(cfg, "autoencoder", 0))?;
        let tcfg = uqmon_core::nnet::TrainingConfig {
            augmentation_fraction: 0.0,
            seed: derive_seed(cfg.seed, &["shuffle", "autoencoder"]),
            ..cfg.training.clone()
        };
        Some(train_autoencoder(&ae, data.inputs(), &tcfg)?.model)
    } else {
        None
    };

    Ok(ModelSet {
        controllers,
        members,
        autoencoder,
        solidity,
    })
}

/// Applies one mutation to every controller and ensemble member. The
/// autoencoder watches inputs only and is left as is.
pub fn mutate_models(
    models: &ModelSet,
    recipe: &MutationRecipe,
    data: &Dataset,
    cfg: &StudyConfig,
) -> Result<ModelSet> {
    let label = recipe.label();
    let one = |m: &Regressor| -> Result<Regressor> {
        let op = recipe.op(derive_seed(
            cfg.seed,
            &["mutation", &label, &m.seed().to_string()],
        ));
        let tcfg = uqmon_core::nnet::TrainingConfig {
            seed: derive_seed(cfg.seed, &["shuffle", &m.seed().to_string()]),
            ..cfg.training.clone()
        };
        Ok(mutate(m, &op, data, &tcfg)?)
    };
    let controllers: Vec<(u64, Regressor)> = models
        .controllers
        .par_iter()
        .map(|(k, m)| Ok((*k, one(m)?)))
        .collect::<Result<_>>()?;
    let members: Vec<Regressor> = models.members.par_iter().map(one).collect::<Result<_>>()?;
    Ok(ModelSet {
        controllers: controllers.into_iter().collect(),
        members,
        autoencoder: models.autoencoder.clone(),
        solidity: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Mcd { rate: f64, samples: usize },
    De { n: usize },
    Autoencoder,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mcd { rate, samples } => write!(f, "mcd-p{rate}-s{samples}"),
            Method::De { n } => write!(f, "de-{n}"),
            Method::Autoencoder => f.write_str("ae"),
        }
    }
}

impl Method {
    pub fn parse(id: &str) -> Option<Self> {
        if id == "ae" {
            return Some(Method::Autoencoder);
        }
        if let Some(n) = id.strip_prefix("de-") {
            return n.parse().ok().map(|n| Method::De { n });
        }
        let rest = id.strip_prefix("mcd-p")?;
        let (rate, samples) = rest.split_once("-s")?;
        Some(Method::Mcd {
            rate: rate.parse().ok()?,
            samples: samples.parse().ok()?,
        })
    }
}

/// Methods requested by the grids, in report order.
pub fn methods(cfg: &StudyConfig) -> Vec<Method> {
    let mut out: Vec<Method> = cfg
        .grids
        .ensemble_sizes
        .iter()
        .map(|&n| Method::De { n })
        .collect();
    for &rate in &cfg.grids.dropout_rates {
        for &samples in &cfg.grids.mcd_samples {
            out.push(Method::Mcd { rate, samples });
        }
    }
    if cfg.grids.autoencoder {
        out.push(Method::Autoencoder);
    }
    out
}

/// What drives the vehicle and what scores each frame.
pub struct System {
    pub controller: Arc<dyn Controller + Send + Sync>,
    pub scorer: Arc<dyn Scorer + Send + Sync>,
    /// Networks involved, for traceability.
    pub model_ids: Vec<String>,
}

/// MC-Dropout drives with its deterministic model, deep ensembles with the
/// ensemble mean, the autoencoder supervises the primary controller.
pub fn build_system(method: Method, models: &ModelSet) -> Result<System> {
    match method {
        Method::Mcd { rate, samples } => {
            let m = models.controller(rate).ok_or_else(|| {
                Error::Config(format!("no solid controller with dropout rate {rate}; retrain or drop it from the grid"))
            })?;
            let scorer = McDropout::new(m.clone(), McdConfig::new(samples))?;
            Ok(System {
                controller: Arc::new(m.clone()),
                scorer: Arc::new(scorer),
                model_ids: vec![m.id()],
            })
        }
        Method::De { n } => {
            if models.members.len() < n {
                return Err(Error::Config(format!(
                    "ensemble of {n} requested but only {} solid members exist",
                    models.members.len()
                )));
            }
            let ens = Arc::new(Ensemble::new(models.members[..n].to_vec())?);
            Ok(System {
                controller: ens.clone(),
                scorer: ens.clone(),
                model_ids: ens.members().iter().map(|m| m.id()).collect(),
            })
        }
        Method::Autoencoder => {
            let ae = models
                .autoencoder
                .as_ref()
                .ok_or_else(|| Error::Config("autoencoder disabled in the grid".into()))?;
            let driver = models.primary_controller().ok_or_else(|| {
                Error::Config("no solid controller for the autoencoder to supervise".into())
            })?;
            Ok(System {
                controller: Arc::new(driver.clone()),
                scorer: Arc::new(AutoencoderScorer::new(ae.clone())?),
                model_ids: vec![driver.id(), ae.id()],
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeRole {
    Calibration,
    Nominal,
    Benchmark,
}

/// One episode to run. `variant` names the mutant for mutation benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePlan {
    pub benchmark: String,
    pub role: EpisodeRole,
    pub variant: Option<String>,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
}

impl EpisodePlan {
    /// File stem, unique within one (method, benchmark).
    pub fn name(&self) -> String {
        let role = match self.role {
            EpisodeRole::Calibration => "calibration",
            EpisodeRole::Nominal => "nominal",
            EpisodeRole::Benchmark => "benchmark",
        };
        match &self.variant {
            Some(v) => format!("{role}-{v}-seed{}", self.seed),
            None => format!("{role}-seed{}", self.seed),
        }
    }
}

/// Episodes of one benchmark at one dt: a calibration run, the nominal runs
/// supplying negative windows, and the benchmark runs supplying failures.
pub fn plan_episodes(cfg: &StudyConfig, recipe: &BenchmarkRecipe, dt: f64) -> Vec<EpisodePlan> {
    let sim = &cfg.simulation;
    let mut plans = vec![EpisodePlan {
        benchmark: recipe.name.clone(),
        role: EpisodeRole::Calibration,
        variant: None,
        seed: derive_seed(cfg.seed, &["calibration", &recipe.name]) % 1_000_000,
        steps: sim.calibration_steps,
        dt,
    }];
    for &seed in &cfg.grids.seeds {
        plans.push(EpisodePlan {
            benchmark: recipe.name.clone(),
            role: EpisodeRole::Nominal,
            variant: None,
            seed,
            steps: sim.steps,
            dt,
        });
    }
    let variants: Vec<Option<String>> = match &recipe.kind {
        RecipeKind::Ood { .. } => vec![None],
        RecipeKind::Mutants { mutations } => mutations.iter().map(|m| Some(m.label())).collect(),
    };
    for v in variants {
        for &seed in &cfg.grids.seeds {
            plans.push(EpisodePlan {
                benchmark: recipe.name.clone(),
                role: EpisodeRole::Benchmark,
                variant: v.clone(),
                seed,
                steps: sim.steps,
                dt,
            });
        }
    }
    plans
}

/// Runs one planned episode with `system`.
pub fn run_plan(
    cfg: &StudyConfig,
    recipe: &BenchmarkRecipe,
    plan: &EpisodePlan,
    system: &System,
) -> Result<SimTrace> {
    let track = course();
    let tags = ["episode", &plan.benchmark, &plan.name()];
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &tags));
    let start = random_pose(
        &track,
        &mut rng,
        cfg.simulation.start_lateral_spread,
        cfg.simulation.start_heading_spread,
    );
    // Nominal runs of a benchmark seed see a different noise stream than
    // its perturbed runs, which is irrelevant without perturbation anyway.
    let spec = match plan.role {
        EpisodeRole::Benchmark => recipe.spec(derive_seed(
            cfg.seed,
            &["perturb", &plan.benchmark, &plan.name()],
        ))?,
        _ => PerturbationSpec::nominal(),
    };
    let ecfg = EpisodeConfig {
        dt: plan.dt,
        max_steps: plan.steps,
        start,
        seed: derive_seed(cfg.seed, &["score", &plan.benchmark, &plan.name()]),
        observation: ObservationConfig::default(),
    };
    Ok(run_episode(
        system.controller.as_ref(),
        &track,
        &spec,
        Some(system.scorer.as_ref()),
        &ecfg,
    )?)
}

/// Nominal system plus one system per mutant, for one method.
pub struct Systems {
    pub nominal: System,
    pub mutants: BTreeMap<String, System>,
}

impl Systems {
    pub fn for_plan(&self, plan: &EpisodePlan) -> Result<&System> {
        match (&plan.role, &plan.variant) {
            (EpisodeRole::Benchmark, Some(v)) => self.mutants.get(v).ok_or_else(|| {
                Error::Config(format!("mutant {v} of {} was not built", plan.benchmark))
            }),
            _ => Ok(&self.nominal),
        }
    }
}

/// Mutated model sets, keyed by mutation label.
pub fn build_mutants(
    cfg: &StudyConfig,
    models: &ModelSet,
    data: &Dataset,
) -> Result<BTreeMap<String, ModelSet>> {
    let mut recipes: BTreeMap<String, MutationRecipe> = BTreeMap::new();
    for b in &cfg.benchmarks {
        if let RecipeKind::Mutants { mutations } = &b.kind {
            for m in mutations {
                recipes.insert(m.label(), *m);
            }
        }
    }
    recipes
        .into_iter()
        .map(|(label, r)| Ok((label, mutate_models(models, &r, data, cfg)?)))
        .collect()
}

pub fn build_systems(
    method: Method,
    models: &ModelSet,
    mutants: &BTreeMap<String, ModelSet>,
) -> Result<Systems> {
    Ok(Systems {
        nominal: build_system(method, models)?,
        mutants: mutants
            .iter()
            .map(|(k, m)| Ok((k.clone(), build_system(method, m)?)))
            .collect::<Result<_>>()?,
    })
}

/// Traces of one (method, benchmark, dt) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTraces {
    pub method: String,
    pub benchmark: String,
    pub calibration: (EpisodePlan, SimTrace),
    pub nominal: Vec<(EpisodePlan, SimTrace)>,
    pub benchmark_runs: Vec<(EpisodePlan, SimTrace)>,
}

/// Runs every planned episode of `recipe` for one method, in parallel.
pub fn simulate_benchmark(
    cfg: &StudyConfig,
    recipe: &BenchmarkRecipe,
    method: Method,
    systems: &Systems,
    dt: f64,
) -> Result<BenchmarkTraces> {
    let plans = plan_episodes(cfg, recipe, dt);
    let traces: Vec<(EpisodePlan, SimTrace)> = plans
        .into_par_iter()
        .map(|p| {
            let t = run_plan(cfg, recipe, &p, systems.for_plan(&p)?)?;
            Ok((p, t))
        })
        .collect::<Result<_>>()?;
    let mut calibration = None;
    let (mut nominal, mut benchmark_runs) = (Vec::new(), Vec::new());
    for (p, t) in traces {
        match p.role {
            EpisodeRole::Calibration => calibration = Some((p, t)),
            EpisodeRole::Nominal => nominal.push((p, t)),
            EpisodeRole::Benchmark => benchmark_runs.push((p, t)),
        }
    }
    Ok(BenchmarkTraces {
        method: method.to_string(),
        benchmark: benchmark_label(recipe, dt, cfg),
        calibration: calibration.expect("plan has a calibration episode"),
        nominal,
        benchmark_runs,
    })
}

/// Benchmark name, suffixed with the time step when several are studied.
pub fn benchmark_label(recipe: &BenchmarkRecipe, dt: f64, cfg: &StudyConfig) -> String {
    if cfg.grids.dt.len() > 1 {
        format!("{}@dt{dt}", recipe.name)
    } else {
        recipe.name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub gamma: f64,
    pub tau: f64,
}

/// Gamma fit of nominal windowed scores and the derived thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: String,
    pub benchmark: String,
    pub window_len_frames: usize,
    pub windows: usize,
    pub kappa: f64,
    pub theta: f64,
    pub iterations: usize,
    pub thresholds: Vec<Threshold>,
}

impl Calibration {
    pub fn tau(&self, gamma: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .find(|t| t.gamma == gamma)
            .map(|t| t.tau)
    }
}

pub fn calibrate(
    method: &str,
    benchmark: &str,
    trace: &SimTrace,
    confidences: &[f64],
) -> Result<Calibration> {
    let set = label_windows(trace, &EvalConfig::default(), TraceRole::Nominal)?;
    let scores = set.negative_scores();
    let fit: GammaFit = fit_gamma(&scores).map_err(|e| match e {
        uqmon_core::Error::Fit(msg) | uqmon_core::Error::InsufficientData(msg) => {
            uqmon_core::Error::Fit(format!(
                "{method}/{benchmark}: {msg} ({} windows, min {:.3e}, max {:.3e})",
                scores.len(),
                scores.iter().copied().fold(f64::INFINITY, f64::min),
                scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ))
        }
        other => other,
    })?;
    let thresholds = confidences
        .iter()
        .map(|&gamma| {
            Ok(Threshold {
                gamma,
                tau: threshold_for(fit.shape, fit.scale, gamma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration {
        method: method.into(),
        benchmark: benchmark.into(),
        window_len_frames: set.window_lengths[0],
        windows: scores.len(),
        kappa: fit.shape,
        theta: fit.scale,
        iterations: fit.iterations,
        thresholds,
    })
}

/// Positive and negative windows of one (method, benchmark) cell.
pub fn detection_windows(
    traces: &BenchmarkTraces,
    eval: &EvalConfig,
) -> Result<DetectionWindowSet> {
    let mut set = DetectionWindowSet::default();
    for (_, t) in &traces.nominal {
        set.merge(label_windows(t, eval, TraceRole::Nominal)?);
    }
    for (_, t) in &traces.benchmark_runs {
        set.merge(label_windows(t, eval, TraceRole::Benchmark)?);
    }
    Ok(set)
}

/// A result row with the artifacts it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub metrics: MetricRow,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub confidence: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_f_a: f64,
    pub mean_f_b: f64,
    pub test: StatTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub comparisons: Vec<Comparison>,
}

pub const AVERAGE_ALL: &str = "average-all";

/// Per-TTF rows of one cell for every confidence level, plus its average row.
pub fn evaluate_benchmark(
    traces: &BenchmarkTraces,
    cal: &Calibration,
    eval: &EvalConfig,
    sources: &[String],
) -> Result<Vec<ReportRow>> {
    let set = detection_windows(traces, eval)?;
    if let Some(w) = set
        .window_lengths
        .iter()
        .find(|&&w| w != cal.window_len_frames)
    {
        return Err(Error::Stale(format!(
            "{}/{}: calibrated with {}-frame windows but traces give {w}; recalibrate",
            traces.method, traces.benchmark, cal.window_len_frames
        )));
    }
    let mut rows = Vec::new();
    for &gamma in &eval.confidences {
        let tau = cal.tau(gamma).ok_or_else(|| {
            Error::Stale(format!(
                "{}/{}: no threshold for confidence {gamma}; recalibrate",
                traces.method, traces.benchmark
            ))
        })?;
        let mut cell = Vec::new();
        for &k in &eval.ttf {
            cell.push(evaluate_cell(
                &set,
                &traces.benchmark,
                &traces.method,
                gamma,
                tau,
                k,
                eval.beta,
            )?);
        }
        let avg = macro_average(&cell, &traces.benchmark, None);
        for m in cell.into_iter().chain(avg) {
            rows.push(ReportRow {
                metrics: m,
                sources: sources.to_vec(),
            });
        }
    }
    Ok(rows)
}

/// Adds the cross-benchmark average rows and the pairwise method
/// comparisons. Rows come out sorted by (confidence, method, benchmark, TTF).
pub fn assemble_report(
    mut rows: Vec<ReportRow>,
    eval: &EvalConfig,
    method_order: &[String],
) -> Result<EvalReport> {
    let rank = |m: &str| {
        method_order
            .iter()
            .position(|x| x == m)
            .unwrap_or(usize::MAX)
    };
    let mut averages = Vec::new();
    for &gamma in &eval.confidences {
        for method in method_order {
            let per_ttf: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| {
                    r.metrics.confidence == gamma
                        && &r.metrics.method == method
                        && r.metrics.ttf.is_some()
                })
                .collect();
            for ttf in eval.ttf.iter().map(|&k| Some(k)).chain([None]) {
                let pick = per_ttf
                    .iter()
                    .filter(|r| ttf.is_none() || r.metrics.ttf == ttf)
                    .map(|r| &r.metrics);
                if let Some(m) = macro_average(pick, AVERAGE_ALL, ttf) {
                    averages.push(ReportRow {
                        metrics: m,
                        sources: Vec::new(),
                    });
                }
            }
        }
    }
    rows.extend(averages);
    rows.sort_by(|a, b| {
        let (x, y) = (&a.metrics, &b.metrics);
        x.confidence
            .total_cmp(&y.confidence)
            .then(rank(&x.method).cmp(&rank(&y.method)))
            .then((x.benchmark == AVERAGE_ALL).cmp(&(y.benchmark == AVERAGE_ALL)))
            .then(x.benchmark.cmp(&y.benchmark))
            .then(x.ttf.is_none().cmp(&y.ttf.is_none()))
            .then(x.ttf.cmp(&y.ttf))
    });

    let comparisons = compare_methods(&rows, &eval.confidences, method_order)?;
    Ok(EvalReport { rows, comparisons })
}

/// Mann-Whitney U and Cohen's d between every pair of methods, over their
/// unflagged per-(benchmark, TTF) F-beta values.
pub fn compare_methods(
    rows: &[ReportRow],
    confidences: &[f64],
    method_order: &[String],
) -> Result<Vec<Comparison>> {
    let mut comparisons = Vec::new();
    for &gamma in confidences {
        let samples = |method: &str| -> Vec<f64> {
            rows.iter()
                .filter(|r| {
                    let m = &r.metrics;
                    m.confidence == gamma
                        && m.method == method
                        && m.ttf.is_some()
                        && m.flag.is_none()
                        && m.benchmark != AVERAGE_ALL
                })
                .map(|r| r.metrics.f_beta)
                .collect()
        };
        for (i, a) in method_order.iter().enumerate() {
            for b in &method_order[i + 1..] {
                let (sa, sb) = (samples(a), samples(b));
                if sa.len() < 2 || sb.len() < 2 {
                    log::warn!("comparison {a} vs {b} at {gamma} skipped: too few cells");
                    continue;
                }
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                comparisons.push(Comparison {
                    method_a: a.clone(),
                    method_b: b.clone(),
                    confidence: gamma,
                    n_a: sa.len(),
                    n_b: sb.len(),
                    mean_f_a: mean(&sa),
                    mean_f_b: mean(&sb),
                    test: compare_samples(&sa, &sb, 0.05)?,
                });
            }
        }
    }
    Ok(comparisons)
}

/// Everything the in-memory study produced.
pub struct StudyOutcome {
    pub models: ModelSet,
    pub traces: Vec<BenchmarkTraces>,
    pub calibrations: Vec<Calibration>,
    pub report: EvalReport,
}

/// Runs the whole study without touching the filesystem.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let data = generate_dataset(cfg)?;
    log::info!("dataset: {} samples", data.len());
    let models = train_models(cfg, &data)?;
    let mutants = build_mutants(cfg, &models, &data)?;
    let eval = EvalConfig {
        confidences: cfg.grids.confidences.clone(),
        ..EvalConfig::default()
    };
    let methods = methods(cfg);
    let mut traces = Vec::new();
    let mut calibrations = Vec::new();
    let mut rows = Vec::new();
    for &method in &methods {
        let systems = build_systems(method, &models, &mutants)?;
        for recipe in &cfg.benchmarks {
            for &dt in &cfg.grids.dt {
                let t = simulate_benchmark(cfg, recipe, method, &systems, dt)?;
                let cal = calibrate(
                    &t.method,
                    &t.benchmark,
                    &t.calibration.1,
                    &cfg.grids.confidences,
                )?;
                let sources = systems.nominal.model_ids.clone();
                rows.extend(evaluate_benchmark(&t, &cal, &eval, &sources)?);
                calibrations.push(cal);
                traces.push(t);
            }
        }
    }
    let order: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    let report = assemble_report(rows, &eval, &order)?;
    Ok(StudyOutcome {
        models,
        traces,
        calibrations,
        report,
    })
}
