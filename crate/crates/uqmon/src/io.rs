//! On-disk formats. Every write goes to a temporary sibling first and is
//! renamed into place.
//!
//! - models: a line-oriented text format (`uqmon-model v1`) with
//!   shortest-round-trip floats, plus a JSON manifest with checksums;
//! - traces: JSON lines, a header object then one object per frame;
//! - tracks: a waypoint text file;
//! - calibration: JSON tied to the checksum of the trace it was fitted on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uqmon_core::nnet::{Activation, Layer, Regressor};
use uqmon_core::sim::{FrameRecord, SimTrace, TraceMeta, Track};

use crate::error::{Error, Result};
use crate::study::{Calibration, EpisodePlan, ModelSet, SolidityEntry};

pub const MODEL_MAGIC: &str = "uqmon-model v1";
pub const TRACK_MAGIC: &str = "uqmon-track v1";
pub const TRACE_FORMAT: &str = "uqmon-trace v1";
pub const MANIFEST_FORMAT: &str = "uqmon-models v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::format(path, "not a file path"))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str, hint: &str) -> Result<T> {
    if !path.exists() {
        return Err(Error::missing(what, path, hint));
    }
    serde_json::from_str(&read_string(path)?).map_err(|e| Error::format(path, e.to_string()))
}

fn join_floats(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x:e}").unwrap();
    }
    s
}

pub fn model_to_string(m: &Regressor) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_MAGIC}").unwrap();
    let dims: Vec<String> = m.layer_dims().iter().map(|d| d.to_string()).collect();
    writeln!(s, "dims {}", dims.join(" ")).unwrap();
    writeln!(s, "activation {}", m.hidden_activation().name()).unwrap();
    writeln!(s, "dropout_rate {:e}", m.dropout_rate()).unwrap();
    writeln!(s, "seed {}", m.seed()).unwrap();
    for (i, l) in m.layers().iter().enumerate() {
        writeln!(s, "layer {i} {} {}", l.outputs, l.inputs).unwrap();
        for row in l.weights.chunks_exact(l.inputs) {
            writeln!(s, "w {}", join_floats(row)).unwrap();
        }
        writeln!(s, "b {}", join_floats(&l.bias)).unwrap();
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::format(self.path, "unexpected end of file"))
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest)),
            _ if line == key => Ok((n, "")),
            _ => Err(Error::format(
                self.path,
                format!("line {n}: expected `{key}`, found `{line}`"),
            )),
        }
    }
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::format(path, format!("line {line}: cannot parse `{tok}`")))
}

fn parse_floats(path: &Path, line: usize, text: &str, expect: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = text
        .split_ascii_whitespace()
        .map(|t| parse_num::<f64>(path, line, t))
        .collect::<Result<_>>()?;
    if v.len() != expect {
        return Err(Error::format(
            path,
            format!("line {line}: {} values, expected {expect}", v.len()),
        ));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::format(
            path,
            format!("line {line}: non-finite value {x}"),
        ));
    }
    Ok(v)
}

/// Parses the model text format. Any deviation is a format error.
pub fn model_from_str(text: &str, path: &Path) -> Result<Regressor> {
    let mut lines = Lines {
        path,
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next_line()?;
    if magic != MODEL_MAGIC {
        return Err(Error::format(
            path,
            format!("expected `{MODEL_MAGIC}` header"),
        ));
    }
    let (n, dims) = lines.field("dims")?;
    let dims: Vec<usize> = dims
        .split_ascii_whitespace()
        .map(|t| parse_num(path, n, t))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(Error::format(
            path,
            format!("line {n}: need at least two dims"),
        ));
    }
    let (n, act) = lines.field("activation")?;
    let activation = Activation::from_name(act)
        .ok_or_else(|| Error::format(path, format!("line {n}: unknown activation `{act}`")))?;
    let (n, rate) = lines.field("dropout_rate")?;
    let rate: f64 = parse_num(path, n, rate)?;
    let (n, seed) = lines.field("seed")?;
    let seed: u64 = parse_num(path, n, seed)?;
    let mut layers = Vec::new();
    for (i, io) in dims.windows(2).enumerate() {
        let (n, head) = lines.field("layer")?;
        if head != format!("{i} {} {}", io[1], io[0]) {
            return Err(Error::format(
                path,
                format!("line {n}: layer header `{head}` does not match dims"),
            ));
        }
        let mut layer = Layer::zeros(io[0], io[1]);
        layer.weights.clear();
        for _ in 0..io[1] {
            let (n, row) = lines.field("w")?;
            layer.weights.extend(parse_floats(path, n, row, io[0])?);
        }
        let (n, bias) = lines.field("b")?;
        layer.bias = parse_floats(path, n, bias, io[1])?;
        layers.push(layer);
    }
    lines.field("end")?;
    if let Some((n, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::format(
            path,
            format!("line {}: trailing content `{extra}`", n + 1),
        ));
    }
    Regressor::from_parts(dims, layers, activation, rate, seed)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_model(path: &Path, m: &Regressor) -> Result<String> {
    let text = model_to_string(m);
    write_atomic(path, text.as_bytes())?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_model(path: &Path) -> Result<Regressor> {
    model_from_str(&read_string(path)?, path)
}

pub fn track_to_string(t: &Track) -> String {
    let mut s = String::new();
    writeln!(s, "{TRACK_MAGIC}").unwrap();
    writeln!(s, "id {}", t.id()).unwrap();
    writeln!(s, "half_width {:e}", t.lane_half_width()).unwrap();
    for p in t.waypoints() {
        writeln!(s, "{:e} {:e}", p[0], p[1]).unwrap();
    }
    s
}

pub fn track_from_str(text: &str, path: &Path) -> Result<Track> {
    let mut lines = Lines {
        path,
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next_line()?;
    if magic != TRACK_MAGIC {
        return Err(Error::format(
            path,
            format!("expected `{TRACK_MAGIC}` header"),
        ));
    }
    let (_, id) = lines.field("id")?;
    let (n, hw) = lines.field("half_width")?;
    let hw: f64 = parse_num(path, n, hw)?;
    let mut points = Vec::new();
    for (i, line) in lines.inner {
        if line.trim().is_empty() {
            continue;
        }
        let xy = parse_floats(path, i + 1, line, 2)?;
        points.push([xy[0], xy[1]]);
    }
    Track::from_waypoints(id, points, hw).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_track(path: &Path, t: &Track) -> Result<()> {
    write_atomic(path, track_to_string(t).as_bytes())
}

pub fn read_track(path: &Path) -> Result<Track> {
    track_from_str(&read_string(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceHeader {
    format: String,
    plan: EpisodePlan,
    meta: TraceMeta,
}

/// JSON lines: a header with the plan and trace metadata, then one record
/// per frame.
pub fn trace_to_string(plan: &EpisodePlan, trace: &SimTrace) -> String {
    let header = TraceHeader {
        format: TRACE_FORMAT.into(),
        plan: plan.clone(),
        meta: trace.meta.clone(),
    };
    let mut s = serde_json::to_string(&header).expect("trace header serializes");
    s.push('\n');
    for r in &trace.records {
        s.push_str(&serde_json::to_string(r).expect("frame record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_trace(path: &Path, plan: &EpisodePlan, trace: &SimTrace) -> Result<String> {
    let text = trace_to_string(plan, trace);
    write_atomic(path, text.as_bytes())?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_trace(path: &Path) -> Result<(EpisodePlan, SimTrace)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty trace"))?
        .map_err(|e| Error::io(path, e))?;
    let header: TraceHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
    if header.format != TRACE_FORMAT {
        return Err(Error::format(
            path,
            format!("unsupported trace format `{}`", header.format),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let r: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))?;
        records.push(r);
    }
    Ok((
        header.plan,
        SimTrace {
            meta: header.meta,
            records,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    /// Relative to the models directory.
    pub file: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerEntry {
    pub dropout_rate: f64,
    #[serde(flatten)]
    pub model: ModelEntry,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelSetManifest {
    pub controllers: Vec<ControllerEntry>,
    pub members: Vec<ModelEntry>,
    pub autoencoder: Option<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub nominal: ModelSetManifest,
    pub mutants: BTreeMap<String, ModelSetManifest>,
    pub solidity: Vec<SolidityEntry>,
}

impl Manifest {
    /// Every model file named by the manifest, relative to the models
    /// directory.
    pub fn files(&self) -> Vec<&Path> {
        std::iter::once(&self.nominal)
            .chain(self.mutants.values())
            .flat_map(|s| {
                s.controllers
                    .iter()
                    .map(|c| &c.model)
                    .chain(&s.members)
                    .chain(&s.autoencoder)
                    .map(|e| e.file.as_path())
            })
            .collect()
    }
}

fn save_set(dir: &Path, sub: &Path, set: &ModelSet) -> Result<ModelSetManifest> {
    let save = |m: &Regressor| -> Result<ModelEntry> {
        let file = sub.join(format!("{}.model", m.id()));
        let sha256 = write_model(&dir.join(&file), m)?;
        Ok(ModelEntry {
            id: m.id(),
            file,
            sha256,
        })
    };
    Ok(ModelSetManifest {
        controllers: set
            .controllers
            .values()
            .map(|m| {
                Ok(ControllerEntry {
                    dropout_rate: m.dropout_rate(),
                    model: save(m)?,
                })
            })
            .collect::<Result<_>>()?,
        members: set.members.iter().map(save).collect::<Result<_>>()?,
        autoencoder: set.autoencoder.as_ref().map(save).transpose()?,
    })
}

/// Writes every model and `manifest.json` under `dir`.
pub fn save_models(
    dir: &Path,
    seed: u64,
    nominal: &ModelSet,
    mutants: &BTreeMap<String, ModelSet>,
) -> Result<Manifest> {
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        seed,
        nominal: save_set(dir, Path::new(""), nominal)?,
        mutants: mutants
            .iter()
            .map(|(label, set)| {
                Ok((
                    label.clone(),
                    save_set(dir, &Path::new("mutants").join(label), set)?,
                ))
            })
            .collect::<Result<_>>()?,
        solidity: nominal.solidity.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn load_entry(dir: &Path, e: &ModelEntry) -> Result<Regressor> {
    let path = dir.join(&e.file);
    if !path.exists() {
        return Err(Error::missing(
            format!("model `{}` listed in manifest.json", e.id),
            &path,
            "rerun `uqmon train`",
        ));
    }
    let bytes = read_bytes(&path)?;
    if sha256_hex(&bytes) != e.sha256 {
        return Err(Error::Stale(format!(
            "{} does not match its manifest checksum; rerun `uqmon train`",
            path.display()
        )));
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(&path, "not UTF-8"))?;
    model_from_str(&text, &path)
}

fn load_set(dir: &Path, m: &ModelSetManifest, solidity: Vec<SolidityEntry>) -> Result<ModelSet> {
    let mut controllers = BTreeMap::new();
    for c in &m.controllers {
        controllers.insert(c.dropout_rate.to_bits(), load_entry(dir, &c.model)?);
    }
    Ok(ModelSet {
        controllers,
        members: m
            .members
            .iter()
            .map(|e| load_entry(dir, e))
            .collect::<Result<_>>()?,
        autoencoder: m
            .autoencoder
            .as_ref()
            .map(|e| load_entry(dir, e))
            .transpose()?,
        solidity,
    })
}

pub struct LoadedModels {
    pub manifest: Manifest,
    pub nominal: ModelSet,
    pub mutants: BTreeMap<String, ModelSet>,
}

pub fn load_models(dir: &Path) -> Result<LoadedModels> {
    let manifest: Manifest = read_json(
        &dir.join("manifest.json"),
        "model manifest",
        "run `uqmon train` first",
    )?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::format(
            &dir.join("manifest.json"),
            format!("unsupported format `{}`", manifest.format),
        ));
    }
    let nominal = load_set(dir, &manifest.nominal, manifest.solidity.clone())?;
    let mutants = manifest
        .mutants
        .iter()
        .map(|(k, m)| Ok((k.clone(), load_set(dir, m, Vec::new())?)))
        .collect::<Result<_>>()?;
    Ok(LoadedModels {
        manifest,
        nominal,
        mutants,
    })
}

/// A calibration together with the trace it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    #[serde(flatten)]
    pub calibration: Calibration,
    pub trace: PathBuf,
    pub trace_sha256: String,
}

impl CalibrationArtifact {
    /// Fails unless the trace still has the recorded checksum.
    pub fn verify(&self, trace_path: &Path) -> Result<()> {
        if !trace_path.exists() {
            return Err(Error::missing(
                "calibration trace",
                trace_path,
                "run `uqmon simulate` then `uqmon calibrate`",
            ));
        }
        let actual = file_sha256(trace_path)?;
        if actual != self.trace_sha256 {
            return Err(Error::Stale(format!(
                "{} changed since {}/{} was calibrated; rerun `uqmon calibrate`",
                trace_path.display(),
                self.calibration.method,
                self.calibration.benchmark
            )));
        }
        Ok(())
    }
}
