//! End-to-end runs of the `uqmon` binary on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 7

[grids]
seeds = [1, 2]
ensemble_sizes = [2]
mcd_samples = [4]

[data]
rollouts_per_track = 1
steps_per_rollout = 1500

[training]
epochs = 15

[simulation]
steps = 800
calibration_steps = 2000

[bench]
inputs = 140
warmup = 20
repetitions = 1
ensemble_sizes = [2, 3]
mcd_samples = [2, 4]
"#;

/// Every file below `root`, relative and sorted.
fn files(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn uqmon(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqmon"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, format!("{TINY}{extra}")).unwrap();
    (dir, cfg)
}

fn reproduce(dir: &Path, cfg: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = uqmon(cfg, &out, &["reproduce"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn reproduce_is_deterministic_and_checks_artifacts() {
    let (dir, cfg) = setup("");
    let a = reproduce(dir.path(), &cfg, "a");
    let b = reproduce(dir.path(), &cfg, "b");

    let listed = files(&a);
    assert_eq!(listed, files(&b));
    for expected in [
        "models/manifest.json",
        "reports/report.json",
        "reports/table.csv",
        "reports/bench.csv",
    ] {
        assert!(
            listed.contains(&PathBuf::from(expected)),
            "{expected} missing"
        );
    }
    for f in &listed {
        // Timings are the only nondeterministic output.
        if f.file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .starts_with("bench.")
        {
            continue;
        }
        assert!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{} differs",
            f.display()
        );
    }

    // Calibration thresholds rise with confidence.
    let calib: Vec<PathBuf> = listed
        .iter()
        .filter(|f| f.starts_with("calibration"))
        .cloned()
        .collect();
    assert!(!calib.is_empty());
    for f in &calib {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(a.join(f)).unwrap()).unwrap();
        let taus: Vec<f64> = v["thresholds"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["tau"].as_f64().unwrap())
            .collect();
        assert_eq!(taus.len(), 5);
        assert!(taus.windows(2).all(|w| w[0] < w[1]), "{taus:?}");
    }

    // A tampered model is refused as stale.
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("models/manifest.json")).unwrap()).unwrap();
    let member = &manifest["nominal"]["members"][0];
    let model = a.join("models").join(member["file"].as_str().unwrap());
    let original = fs::read_to_string(&model).unwrap();
    fs::write(&model, original.replacen("seed", "seed ", 1)).unwrap();
    let o = uqmon(&cfg, &a, &["evaluate"]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[stale]"));

    // A deleted model is reported by its manifest entry.
    fs::remove_file(&model).unwrap();
    let o = uqmon(&cfg, &a, &["evaluate"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 3, "{err}");
    assert!(
        err.contains(member["id"].as_str().unwrap()) && err.contains("manifest.json"),
        "{err}"
    );

    // A tampered calibration trace is refused as well.
    let trace = b.join(
        listed
            .iter()
            .find(|f| f.starts_with("traces") && f.to_str().unwrap().contains("calibration"))
            .unwrap(),
    );
    let mut text = fs::read_to_string(&trace).unwrap();
    text.push('\n');
    fs::write(&trace, text).unwrap();
    assert_eq!(code(&uqmon(&cfg, &b, &["evaluate"])), 5);
}

#[test]
fn failure_free_cells_are_flagged() {
    let (dir, cfg) = setup(
        r#"
[[benchmarks]]
name = "nominal-only"
kind = "ood"
tier = "moderate"
perturbations = [{ kind = "additive-noise", intensity = 0.02 }]
"#,
    );
    let out = reproduce(dir.path(), &cfg, "out");
    let table = fs::read_to_string(out.join("reports/table.csv")).unwrap();
    assert!(table.contains("no failures"), "{table}");
}

#[test]
fn each_step_names_the_missing_one() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    let o = uqmon(&cfg, &out, &["simulate"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uqmon train"));
    assert!(uqmon(&cfg, &out, &["train"]).status.success());
    let o = uqmon(&cfg, &out, &["calibrate"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uqmon simulate"));
    let o = uqmon(&cfg, &out, &["evaluate"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uqmon calibrate"));
}

#[test]
fn excessive_dropout_rate_is_a_config_error() {
    let (dir, cfg) = setup("");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("[grids]\n", "[grids]\ndropout_rates = [0.45]\n");
    fs::write(&cfg, text).unwrap();
    let o = uqmon(&cfg, &dir.path().join("out"), &["train"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[disregarded-rate]"));
}

#[test]
fn unknown_estimator_is_rejected() {
    let (dir, cfg) = setup("");
    let o = uqmon(
        &cfg,
        &dir.path().join("out"),
        &["simulate", "--estimator", "de-99"],
    );
    assert_eq!(code(&o), 2);
}
