//! File-backed stages of the study, one function per subcommand.
//!
//! Layout under the output directory (names configurable in `[paths]`):
//!
//! ```text
//! tracks/<track>.txt
//! models/manifest.json, models/*.model, models/mutants/<label>/*.model
//! traces/<method>/<benchmark>/<episode>.jsonl
//! calibration/<method>/<benchmark>.json
//! reports/report.{json,csv}, table.csv, comparisons.csv, bench.{json,csv}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use uqmon_core::eval::EvalConfig;

use crate::bench::{run_bench, BenchRow};
use crate::config::{BenchmarkRecipe, StudyConfig};
use crate::error::{Error, Result};
use crate::io::{
    load_models, read_json, read_trace, save_models, write_json, write_trace, write_track,
    CalibrationArtifact, LoadedModels, Manifest, ModelSetManifest,
};
use crate::report::{write_bench_report, write_eval_report};
use crate::study::{
    assemble_report, benchmark_label, build_mutants, build_systems, calibrate, compare_methods,
    course, evaluate_benchmark, generate_dataset, methods, plan_episodes, simulate_benchmark,
    train_models, BenchmarkTraces, Comparison, EpisodePlan, EpisodeRole, EvalReport, Method,
    Systems,
};

/// Optional narrowing of the configured grids.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub estimators: Option<Vec<String>>,
    pub benchmarks: Option<Vec<String>>,
    pub gammas: Option<Vec<f64>>,
}

/// Resolved artifact locations.
pub struct Layout {
    pub root: PathBuf,
    pub tracks: PathBuf,
    pub models: PathBuf,
    pub traces: PathBuf,
    pub calibration: PathBuf,
    pub reports: PathBuf,
}

impl Layout {
    pub fn new(cfg: &StudyConfig, root: &Path) -> Self {
        let p = &cfg.paths;
        Self {
            root: root.to_path_buf(),
            tracks: root.join(&p.tracks),
            models: root.join(&p.models),
            traces: root.join(&p.traces),
            calibration: root.join(&p.calibration),
            reports: root.join(&p.reports),
        }
    }

    pub fn trace_path(&self, method: &str, benchmark: &str, plan: &EpisodePlan) -> PathBuf {
        self.traces
            .join(method)
            .join(benchmark)
            .join(format!("{}.jsonl", plan.name()))
    }

    pub fn calibration_path(&self, method: &str, benchmark: &str) -> PathBuf {
        self.calibration
            .join(method)
            .join(format!("{benchmark}.json"))
    }

    /// `path` relative to the output root, for reports.
    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

impl Selection {
    pub fn methods(&self, cfg: &StudyConfig) -> Result<Vec<Method>> {
        let all = methods(cfg);
        match &self.estimators {
            None => Ok(all),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    Method::parse(id)
                        .filter(|m| all.contains(m))
                        .ok_or_else(|| {
                            let known: Vec<String> = all.iter().map(|m| m.to_string()).collect();
                            Error::Config(format!(
                                "unknown estimator `{id}`; configured: {}",
                                known.join(", ")
                            ))
                        })
                })
                .collect(),
        }
    }

    pub fn benchmarks<'a>(&self, cfg: &'a StudyConfig) -> Result<Vec<&'a BenchmarkRecipe>> {
        match &self.benchmarks {
            None => Ok(cfg.benchmarks.iter().collect()),
            Some(names) => names
                .iter()
                .map(|n| {
                    cfg.benchmarks
                        .iter()
                        .find(|b| &b.name == n)
                        .ok_or_else(|| Error::Config(format!("unknown benchmark `{n}`")))
                })
                .collect(),
        }
    }

    pub fn gammas(&self, cfg: &StudyConfig) -> Result<Vec<f64>> {
        match &self.gammas {
            None => Ok(cfg.grids.confidences.clone()),
            Some(gs) => {
                for g in gs {
                    if !cfg.grids.confidences.contains(g) {
                        return Err(Error::Config(format!(
                            "confidence {g} is not in the calibrated grid {:?}",
                            cfg.grids.confidences
                        )));
                    }
                }
                Ok(gs.clone())
            }
        }
    }
}

/// Generates the dataset, trains and filters every model, builds the
/// mutants and writes them with their manifest.
pub fn cmd_train(cfg: &StudyConfig, out: &Path) -> Result<Manifest> {
    let layout = Layout::new(cfg, out);
    let track = course();
    write_track(&layout.tracks.join(format!("{}.txt", track.id())), &track)?;
    let data = generate_dataset(cfg)?;
    log::info!("dataset: {} samples", data.len());
    let models = train_models(cfg, &data)?;
    for s in &models.solidity {
        log::info!("{}: {} solid={}", s.role, s.model_id, s.solid);
    }
    let mutants = build_mutants(cfg, &models, &data)?;
    save_models(&layout.models, cfg.seed, &models, &mutants)
}

fn load(cfg: &StudyConfig, layout: &Layout) -> Result<LoadedModels> {
    let loaded = load_models(&layout.models)?;
    if loaded.manifest.seed != cfg.seed {
        return Err(Error::Stale(format!(
            "models were trained with seed {} but the config says {}; rerun `uqmon train`",
            loaded.manifest.seed, cfg.seed
        )));
    }
    Ok(loaded)
}

fn systems(method: Method, loaded: &LoadedModels) -> Result<Systems> {
    build_systems(method, &loaded.nominal, &loaded.mutants)
}

/// Runs every selected (method, benchmark, dt) cell and writes its traces.
pub fn cmd_simulate(cfg: &StudyConfig, out: &Path, sel: &Selection) -> Result<usize> {
    let methods = sel.methods(cfg)?;
    let recipes = sel.benchmarks(cfg)?;
    let layout = Layout::new(cfg, out);
    let loaded = load(cfg, &layout)?;
    let mut written = 0;
    for method in methods {
        let sys = systems(method, &loaded)?;
        for &recipe in &recipes {
            for &dt in &cfg.grids.dt {
                let t = simulate_benchmark(cfg, recipe, method, &sys, dt)?;
                let runs = std::iter::once(&t.calibration)
                    .chain(&t.nominal)
                    .chain(&t.benchmark_runs);
                for (plan, trace) in runs {
                    write_trace(
                        &layout.trace_path(&t.method, &t.benchmark, plan),
                        plan,
                        trace,
                    )?;
                    written += 1;
                }
                log::info!(
                    "{method}/{}: {} failures",
                    t.benchmark,
                    t.benchmark_runs
                        .iter()
                        .map(|(_, r)| r.failure_onsets().len())
                        .sum::<usize>()
                );
            }
        }
    }
    Ok(written)
}

fn calibration_plan(cfg: &StudyConfig, recipe: &BenchmarkRecipe, dt: f64) -> EpisodePlan {
    plan_episodes(cfg, recipe, dt)
        .into_iter()
        .find(|p| p.role == EpisodeRole::Calibration)
        .expect("every plan has a calibration episode")
}

fn missing_trace(path: &Path) -> Error {
    Error::missing(
        "trace",
        path,
        "run `uqmon simulate` for this estimator and benchmark",
    )
}

/// Fits the nominal calibration trace of each selected cell.
pub fn cmd_calibrate(
    cfg: &StudyConfig,
    out: &Path,
    sel: &Selection,
) -> Result<Vec<CalibrationArtifact>> {
    let layout = Layout::new(cfg, out);
    let mut artifacts = Vec::new();
    for method in sel.methods(cfg)? {
        let id = method.to_string();
        for recipe in sel.benchmarks(cfg)? {
            for &dt in &cfg.grids.dt {
                let label = benchmark_label(recipe, dt, cfg);
                let plan = calibration_plan(cfg, recipe, dt);
                let path = layout.trace_path(&id, &label, &plan);
                if !path.exists() {
                    return Err(missing_trace(&path));
                }
                let (_, trace) = read_trace(&path)?;
                let calibration = calibrate(&id, &label, &trace, &cfg.grids.confidences)?;
                let artifact = CalibrationArtifact {
                    calibration,
                    trace: PathBuf::from(layout.rel(&path)),
                    trace_sha256: crate::io::file_sha256(&path)?,
                };
                write_json(&layout.calibration_path(&id, &label), &artifact)?;
                artifacts.push(artifact);
            }
        }
    }
    Ok(artifacts)
}

fn load_traces(
    cfg: &StudyConfig,
    layout: &Layout,
    method: &str,
    recipe: &BenchmarkRecipe,
    dt: f64,
) -> Result<(BenchmarkTraces, Vec<String>)> {
    let label = benchmark_label(recipe, dt, cfg);
    let mut files = Vec::new();
    let (mut calibration, mut nominal, mut runs) = (None, Vec::new(), Vec::new());
    for plan in plan_episodes(cfg, recipe, dt) {
        let path = layout.trace_path(method, &label, &plan);
        if !path.exists() {
            return Err(missing_trace(&path));
        }
        let (stored, trace) = read_trace(&path)?;
        if stored != plan {
            return Err(Error::Stale(format!(
                "{} was simulated under a different configuration; rerun `uqmon simulate`",
                path.display()
            )));
        }
        files.push(layout.rel(&path));
        match plan.role {
            EpisodeRole::Calibration => calibration = Some((plan, trace)),
            EpisodeRole::Nominal => nominal.push((plan, trace)),
            EpisodeRole::Benchmark => runs.push((plan, trace)),
        }
    }
    Ok((
        BenchmarkTraces {
            method: method.into(),
            benchmark: label,
            calibration: calibration.expect("plans include calibration"),
            nominal,
            benchmark_runs: runs,
        },
        files,
    ))
}

fn model_files(layout: &Layout, set: &ModelSetManifest, ids: &[String]) -> Vec<String> {
    let entries = set
        .controllers
        .iter()
        .map(|c| &c.model)
        .chain(&set.members)
        .chain(&set.autoencoder);
    let by_id: BTreeMap<&str, &PathBuf> = entries.map(|e| (e.id.as_str(), &e.file)).collect();
    ids.iter()
        .filter_map(|id| by_id.get(id.as_str()))
        .map(|f| layout.rel(&layout.models.join(f)))
        .collect()
}

/// Loads the calibration of a cell and checks it against its trace.
pub fn load_calibration(
    layout: &Layout,
    method: &str,
    benchmark: &str,
) -> Result<CalibrationArtifact> {
    let path = layout.calibration_path(method, benchmark);
    let art: CalibrationArtifact =
        read_json(&path, "calibration artifact", "run `uqmon calibrate`")?;
    art.verify(&layout.root.join(&art.trace))?;
    Ok(art)
}

/// Evaluates every selected cell and writes the report files.
pub fn cmd_evaluate(cfg: &StudyConfig, out: &Path, sel: &Selection) -> Result<EvalReport> {
    let eval = EvalConfig {
        confidences: sel.gammas(cfg)?,
        ..EvalConfig::default()
    };
    let methods = sel.methods(cfg)?;
    sel.benchmarks(cfg)?;
    let layout = Layout::new(cfg, out);
    let loaded = load(cfg, &layout)?;
    let mut rows = Vec::new();
    for &method in &methods {
        let id = method.to_string();
        let sys = systems(method, &loaded)?;
        for recipe in sel.benchmarks(cfg)? {
            for &dt in &cfg.grids.dt {
                let label = benchmark_label(recipe, dt, cfg);
                let art = load_calibration(&layout, &id, &label)?;
                let (traces, trace_files) = load_traces(cfg, &layout, &id, recipe, dt)?;
                let mut sources =
                    model_files(&layout, &loaded.manifest.nominal, &sys.nominal.model_ids);
                for (variant, s) in &sys.mutants {
                    if traces
                        .benchmark_runs
                        .iter()
                        .any(|(p, _)| p.variant.as_ref() == Some(variant))
                    {
                        sources.extend(model_files(
                            &layout,
                            &loaded.manifest.mutants[variant],
                            &s.model_ids,
                        ));
                    }
                }
                sources.push(layout.rel(&layout.calibration_path(&id, &label)));
                sources.extend(trace_files);
                rows.extend(evaluate_benchmark(
                    &traces,
                    &art.calibration,
                    &eval,
                    &sources,
                )?);
            }
        }
    }
    let order: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    let report = assemble_report(rows, &eval, &order)?;
    write_eval_report(&layout.reports, &report, &order)?;
    Ok(report)
}

/// Latency and footprint of every configured estimator.
pub fn cmd_bench(cfg: &StudyConfig, out: &Path) -> Result<Vec<BenchRow>> {
    let layout = Layout::new(cfg, out);
    let loaded = load(cfg, &layout)?;
    let rows = run_bench(cfg, &loaded.nominal)?;
    write_bench_report(&layout.reports, &rows)?;
    Ok(rows)
}

/// Pairwise tests between the selected estimators on an existing report.
pub fn cmd_compare(cfg: &StudyConfig, out: &Path, sel: &Selection) -> Result<Vec<Comparison>> {
    let layout = Layout::new(cfg, out);
    let path = layout.reports.join("report.json");
    let report: EvalReport = read_json(&path, "evaluation report", "run `uqmon evaluate`")?;
    let order: Vec<String> = match &sel.estimators {
        Some(ids) => ids.clone(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for r in &report.rows {
                if !seen.contains(&r.metrics.method) {
                    seen.push(r.metrics.method.clone());
                }
            }
            seen
        }
    };
    for id in &order {
        if !report.rows.iter().any(|r| &r.metrics.method == id) {
            return Err(Error::Config(format!(
                "estimator `{id}` does not appear in {}",
                path.display()
            )));
        }
    }
    if order.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two estimators".into(),
        ));
    }
    let gammas = match &sel.gammas {
        Some(g) => g.clone(),
        None => {
            let mut g: Vec<f64> = report.rows.iter().map(|r| r.metrics.confidence).collect();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    };
    let comparisons = compare_methods(&report.rows, &gammas, &order)?;
    write_json(&layout.reports.join("compare.json"), &comparisons)?;
    Ok(comparisons)
}

pub struct Reproduction {
    pub report: EvalReport,
    pub bench: Vec<BenchRow>,
}

/// train, simulate, calibrate, evaluate and bench in sequence.
pub fn cmd_reproduce(cfg: &StudyConfig, out: &Path) -> Result<Reproduction> {
    let all = Selection::default();
    cmd_train(cfg, out)?;
    cmd_simulate(cfg, out, &all)?;
    cmd_calibrate(cfg, out, &all)?;
    let report = cmd_evaluate(cfg, out, &all)?;
    let bench = cmd_bench(cfg, out)?;
    Ok(Reproduction { report, bench })
}
