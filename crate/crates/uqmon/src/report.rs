//! Report files: a long CSV, a Table-style wide CSV, comparisons and the
//! JSON variant of each.

use std::collections::BTreeMap;
use std::path::Path;

use crate::bench::{BenchMode, BenchRow};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::study::{EvalReport, ReportRow};

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

/// One line per (confidence, method, benchmark, TTF) cell.
pub fn report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "benchmark",
        "method",
        "confidence",
        "tau",
        "ttf",
        "tp",
        "fp",
        "fn",
        "tn",
        "precision",
        "recall",
        "f3",
        "false_alarm_rate",
        "auc",
        "flag",
        "sources",
    ])
    .map_err(&err)?;
    for r in rows {
        let m = &r.metrics;
        let c = m.confusion;
        w.write_record([
            m.benchmark.clone(),
            m.method.clone(),
            m.confidence.to_string(),
            m.tau.to_string(),
            opt(m.ttf),
            opt(c.map(|c| c.tp)),
            opt(c.map(|c| c.fp)),
            opt(c.map(|c| c.fn_)),
            opt(c.map(|c| c.tn)),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f_beta.to_string(),
            m.false_alarm_rate.to_string(),
            opt(m.auc),
            opt(m.flag.map(|f| f.as_str())),
            r.sources.join(";"),
        ])
        .map_err(&err)?;
    }
    finish(path, w)
}

/// Rows (confidence, benchmark, TTF); Pr/Re/F3 columns per method, as
/// percentages.
pub fn table_csv(path: &Path, rows: &[ReportRow], methods: &[String]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["confidence".to_string(), "benchmark".into(), "ttf".into()];
    for m in methods {
        for col in ["pr", "re", "f3"] {
            header.push(format!("{m}:{col}"));
        }
    }
    w.write_record(&header).map_err(&err)?;
    // Keys keep the order rows arrive in.
    let mut keys: Vec<(String, String, Option<u32>)> = Vec::new();
    let mut cells: BTreeMap<(String, String, Option<u32>, String), &ReportRow> = BTreeMap::new();
    for r in rows {
        let m = &r.metrics;
        let key = (m.confidence.to_string(), m.benchmark.clone(), m.ttf);
        if !keys.contains(&key) {
            keys.push(key.clone());
        }
        cells.insert((key.0, key.1, key.2, m.method.clone()), r);
    }
    let pct = |x: f64| format!("{:.0}", 100.0 * x);
    for (g, b, ttf) in keys {
        let mut rec = vec![
            g.clone(),
            b.clone(),
            ttf.map(|t| t.to_string()).unwrap_or_else(|| "avg".into()),
        ];
        for m in methods {
            match cells.get(&(g.clone(), b.clone(), ttf, m.clone())) {
                Some(r) if r.metrics.flag.is_none() => {
                    rec.extend([
                        pct(r.metrics.precision),
                        pct(r.metrics.recall),
                        pct(r.metrics.f_beta),
                    ]);
                }
                Some(r) => {
                    let f = r
                        .metrics
                        .flag
                        .map(|f| f.as_str())
                        .unwrap_or_default()
                        .to_string();
                    rec.extend([f.clone(), f.clone(), f]);
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec).map_err(&err)?;
    }
    finish(path, w)
}

pub fn comparisons_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method_a",
        "method_b",
        "confidence",
        "n_a",
        "n_b",
        "mean_f3_a",
        "mean_f3_b",
        "u",
        "p_value",
        "p_method",
        "cohens_d",
        "significant",
    ])
    .map_err(&err)?;
    for c in &report.comparisons {
        w.write_record([
            c.method_a.clone(),
            c.method_b.clone(),
            c.confidence.to_string(),
            c.n_a.to_string(),
            c.n_b.to_string(),
            c.mean_f_a.to_string(),
            c.mean_f_b.to_string(),
            c.test.u.to_string(),
            c.test.p_value.to_string(),
            format!("{:?}", c.test.method),
            opt(c.test.cohens_d),
            c.test.significant.to_string(),
        ])
        .map_err(&err)?;
    }
    finish(path, w)
}

/// Writes `report.{json,csv}`, `table.csv` and `comparisons.csv`.
pub fn write_eval_report(dir: &Path, report: &EvalReport, methods: &[String]) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    report_csv(&dir.join("report.csv"), &report.rows)?;
    table_csv(&dir.join("table.csv"), &report.rows, methods)?;
    comparisons_csv(&dir.join("comparisons.csv"), report)
}

pub fn bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "estimator",
        "family",
        "size",
        "mode",
        "repetitions",
        "inputs",
        "warmup",
        "mean_ms",
        "median_ms",
        "p95_ms",
        "param_bytes",
        "filler_members",
    ])
    .map_err(&err)?;
    for r in rows {
        let mode = match r.mode {
            BenchMode::Serial => "serial",
            BenchMode::Parallel => "parallel",
        };
        w.write_record([
            r.estimator.clone(),
            r.family.clone(),
            r.size.to_string(),
            mode.into(),
            r.repetitions.to_string(),
            r.inputs.to_string(),
            r.warmup.to_string(),
            format!("{:.6}", r.mean_ms),
            format!("{:.6}", r.median_ms),
            format!("{:.6}", r.p95_ms),
            r.param_bytes.to_string(),
            r.filler_members.to_string(),
        ])
        .map_err(&err)?;
    }
    finish(path, w)
}

pub fn write_bench_report(dir: &Path, rows: &[BenchRow]) -> Result<()> {
    write_json(&dir.join("bench.json"), &rows)?;
    bench_csv(&dir.join("bench.csv"), rows)
}

/// Fixed-width text rendering of the bench rows.
pub fn bench_text(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:<16} {:>5} {:<9} {:>10} {:>10} {:>10} {:>11}\n",
        "estimator", "size", "mode", "mean ms", "median ms", "p95 ms", "param bytes"
    );
    for r in rows {
        let mode = match r.mode {
            BenchMode::Serial => "serial",
            BenchMode::Parallel => "parallel",
        };
        s.push_str(&format!(
            "{:<16} {:>5} {:<9} {:>10.4} {:>10.4} {:>10.4} {:>11}\n",
            r.estimator, r.size, mode, r.mean_ms, r.median_ms, r.p95_ms, r.param_bytes
        ));
    }
    s
}
