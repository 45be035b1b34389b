use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::{auc_roc, confusion, f_beta, Confusion, DetectionWindowSet};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellFlag {
    NoFailures,
    NoNegatives,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::NoFailures => "no failures",
            CellFlag::NoNegatives => "no nominal windows",
        }
    }
}

/// One line of the results table. `ttf: None` marks an average row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub benchmark: String,
    pub method: String,
    pub confidence: f64,
    pub tau: f64,
    pub ttf: Option<u32>,
    pub confusion: Option<Confusion>,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub false_alarm_rate: f64,
    pub auc: Option<f64>,
    pub flag: Option<CellFlag>,
}

/// Metrics for one (benchmark, method, TTF, threshold) cell.
pub fn evaluate_cell(
    windows: &DetectionWindowSet,
    benchmark: &str,
    method: &str,
    confidence: f64,
    tau: f64,
    ttf: u32,
    beta: f64,
) -> Result<MetricRow> {
    let c = confusion(windows, tau, ttf);
    let (precision, recall) = (c.precision(), c.recall());
    let flag = if c.positives() == 0 {
        Some(CellFlag::NoFailures)
    } else if c.negatives() == 0 {
        Some(CellFlag::NoNegatives)
    } else {
        None
    };
    let auc = match flag {
        None => Some(auc_roc(
            &windows.positive_scores(ttf),
            &windows.negative_scores(),
        )?),
        Some(_) => None,
    };
    Ok(MetricRow {
        benchmark: benchmark.into(),
        method: method.into(),
        confidence,
        tau,
        ttf: Some(ttf),
        confusion: Some(c),
        precision,
        recall,
        f_beta: f_beta(precision, recall, beta)?,
        false_alarm_rate: c.false_alarm_rate(),
        auc,
        flag,
    })
}

/// Unweighted mean of the unflagged rows. Returns `None` if none remain.
pub fn macro_average<'a>(
    rows: impl IntoIterator<Item = &'a MetricRow>,
    benchmark: &str,
    ttf: Option<u32>,
) -> Option<MetricRow> {
    let mut n = 0usize;
    let mut auc_n = 0usize;
    let mut acc = [0.0f64; 5];
    let mut first: Option<&MetricRow> = None;
    for r in rows.into_iter().filter(|r| r.flag.is_none()) {
        first.get_or_insert(r);
        n += 1;
        acc[0] += r.precision;
        acc[1] += r.recall;
        acc[2] += r.f_beta;
        acc[3] += r.false_alarm_rate;
        if let Some(a) = r.auc {
            acc[4] += a;
            auc_n += 1;
        }
    }
    let first = first?;
    let n = n as f64;
    Some(MetricRow {
        benchmark: benchmark.into(),
        method: first.method.clone(),
        confidence: first.confidence,
        tau: first.tau,
        ttf,
        confusion: None,
        precision: acc[0] / n,
        recall: acc[1] / n,
        f_beta: acc[2] / n,
        false_alarm_rate: acc[3] / n,
        auc: (auc_n > 0).then(|| acc[4] / auc_n as f64),
        flag: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{PositiveWindow, Window};
    use alloc::vec;

    fn windows() -> DetectionWindowSet {
        let w = |s| Window {
            start: 0,
            end: 1,
            max_score: s,
        };
        DetectionWindowSet {
            positives: vec![
                PositiveWindow {
                    failure_frame: 0,
                    ttf: 1,
                    window: w(0.9),
                },
                PositiveWindow {
                    failure_frame: 0,
                    ttf: 1,
                    window: w(0.2),
                },
            ],
            negatives: vec![w(0.5), w(0.1)],
            ..Default::default()
        }
    }

    #[test]
    fn cell_and_flags() {
        let set = windows();
        let row = evaluate_cell(&set, "b", "m", 0.99, 0.4, 1, 3.0).unwrap();
        assert_eq!(row.precision, 0.5);
        assert_eq!(row.recall, 0.5);
        assert_eq!(row.auc, Some(0.75));
        let empty = evaluate_cell(&set, "b", "m", 0.99, 0.4, 2, 3.0).unwrap();
        assert_eq!(empty.flag, Some(CellFlag::NoFailures));
        assert_eq!(empty.auc, None);
    }

    #[test]
    fn average_skips_flagged_rows() {
        let set = windows();
        let rows = [
            evaluate_cell(&set, "b", "m", 0.99, 0.4, 1, 3.0).unwrap(),
            evaluate_cell(&set, "b", "m", 0.99, 0.95, 1, 3.0).unwrap(),
            evaluate_cell(&set, "b", "m", 0.99, 0.4, 2, 3.0).unwrap(),
        ];
        let avg = macro_average(&rows, "avg", None).unwrap();
        assert_eq!(avg.recall, 0.25);
        assert_eq!(avg.precision, 0.5 * (0.5 + 0.0));
        assert!(macro_average(&rows[2..], "avg", None).is_none());
    }
}
