use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqmon::commands::{
    cmd_bench, cmd_calibrate, cmd_compare, cmd_evaluate, cmd_reproduce, cmd_simulate, cmd_train,
    Selection,
};
use uqmon::config::StudyConfig;
use uqmon::report::bench_text;
use uqmon::{Error, Result};

/// Uncertainty-based failure prediction study for learned lane keeping.
#[derive(Parser)]
#[command(name = "uqmon", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Study configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "uqmon-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Default)]
struct Select {
    /// Estimator ids such as de-5, mcd-p0.05-s32, ae (comma separated).
    #[arg(long, value_delimiter = ',')]
    estimator: Option<Vec<String>>,
    /// Benchmark names (comma separated).
    #[arg(long, value_delimiter = ',')]
    benchmark: Option<Vec<String>>,
    /// Confidence levels to report (comma separated).
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
}

impl From<Select> for Selection {
    fn from(s: Select) -> Self {
        Selection {
            estimators: s.estimator,
            benchmarks: s.benchmark,
            gammas: s.gamma,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train controllers, ensemble members, the autoencoder and mutants.
    Train,
    /// Drive every benchmark episode and write traces.
    Simulate(Select),
    /// Fit Gamma thresholds on nominal calibration traces.
    Calibrate(Select),
    /// Score detection windows and write the report.
    Evaluate(Select),
    /// Measure per-frame latency and parameter footprint.
    Bench,
    /// Pairwise significance tests on an existing report.
    Compare(Select),
    /// Run train, simulate, calibrate, evaluate and bench.
    Reproduce,
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(j) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs {j}: {e}")))?;
    }
    let out = &g.out;
    match cli.command {
        Command::Train => {
            let m = cmd_train(&cfg, out)?;
            let solid = m.solidity.iter().filter(|s| s.solid).count();
            println!(
                "trained {} models ({solid} solid) into {}",
                m.files().len(),
                out.display()
            );
        }
        Command::Simulate(s) => {
            let n = cmd_simulate(&cfg, out, &s.into())?;
            println!("wrote {n} traces");
        }
        Command::Calibrate(s) => {
            for a in cmd_calibrate(&cfg, out, &s.into())? {
                let c = &a.calibration;
                let taus: Vec<String> = c
                    .thresholds
                    .iter()
                    .map(|t| format!("{}:{:.4e}", t.gamma, t.tau))
                    .collect();
                println!(
                    "{}/{} kappa={:.4} theta={:.4e} {}",
                    c.method,
                    c.benchmark,
                    c.kappa,
                    c.theta,
                    taus.join(" ")
                );
            }
        }
        Command::Evaluate(s) => {
            let r = cmd_evaluate(&cfg, out, &s.into())?;
            println!(
                "{} report rows, {} comparisons",
                r.rows.len(),
                r.comparisons.len()
            );
        }
        Command::Bench => print!("{}", bench_text(&cmd_bench(&cfg, out)?)),
        Command::Compare(s) => {
            for c in cmd_compare(&cfg, out, &s.into())? {
                println!(
                    "{} vs {} @ {}: F3 {:.3} vs {:.3}, U={} p={:.4} d={} {}",
                    c.method_a,
                    c.method_b,
                    c.confidence,
                    c.mean_f_a,
                    c.mean_f_b,
                    c.test.u,
                    c.test.p_value,
                    c.test
                        .cohens_d
                        .map(|d| format!("{d:.3}"))
                        .unwrap_or_else(|| "n/a".into()),
                    if c.test.significant {
                        "significant"
                    } else {
                        "not significant"
                    }
                );
            }
        }
        Command::Reproduce => {
            let r = cmd_reproduce(&cfg, out)?;
            println!(
                "{} report rows written to {}",
                r.report.rows.len(),
                out.display()
            );
            print!("{}", bench_text(&r.bench));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
