use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::to_db;
use crate::pipeline::{Method, StageTimings};

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "snr_db",
    "trial",
    "seed",
    "nmse_db",
    "rmse_m",
    "t_stage1_ms",
    "t_stage2_ms",
    "t_stage3_ms",
    "status",
];

pub const STATUS_OK: &str = "ok";

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: Method,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    /// Linear NMSE; `None` for failed trials.
    pub nmse: Option<f64>,
    /// Localization error of this trial, for methods that localize.
    pub rmse_m: Option<f64>,
    pub timings: StageTimings,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl TrialRow {
    pub fn ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

/// Statistics of one (method, SNR) cell over its successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub failed: usize,
    /// Mean of the linear NMSE.
    pub nmse_mean: f64,
    /// Sample standard deviation of the linear NMSE.
    pub nmse_std: f64,
    /// `10 log10(nmse_mean)`.
    pub nmse_db: f64,
    /// `sqrt(mean ‖p̂ - p‖²)`.
    pub rmse_m: Option<f64>,
    /// Sample standard deviation of the per-trial localization error.
    pub location_error_std: Option<f64>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub method: Method,
    pub failed: usize,
    pub total: usize,
    pub rate: f64,
}

/// Raw rows ordered by (method, SNR point, trial) plus their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub schema: String,
    pub profile: String,
    pub rows: Vec<TrialRow>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<FailureSummary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates of consecutive rows sharing method and SNR.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].method, rows[start].snr_db.to_bits());
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (r.method, r.snr_db.to_bits()) == key)
                .count();
        let cell = &rows[start..end];
        let ok: Vec<&TrialRow> = cell.iter().filter(|r| r.ok()).collect();
        let nmse: Vec<f64> = ok.iter().filter_map(|r| r.nmse).collect();
        let err: Vec<f64> = ok.iter().filter_map(|r| r.rmse_m).collect();
        let (nmse_mean, nmse_std) = mean_std(&nmse);
        let (rmse_m, location_error_std) = if err.is_empty() {
            (None, None)
        } else {
            let ms = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
            (Some(ms.sqrt()), Some(mean_std(&err).1))
        };
        let t = |f: fn(&StageTimings) -> f64| mean_std(&ok.iter().map(|r| f(&r.timings)).collect::<Vec<_>>()).0;
        out.push(Aggregate {
            method: rows[start].method,
            snr_db: rows[start].snr_db,
            trials: cell.len(),
            failed: cell.len() - ok.len(),
            nmse_mean,
            nmse_std,
            nmse_db: to_db(nmse_mean),
            rmse_m,
            location_error_std,
            timings: StageTimings {
                stage1_ms: t(|t| t.stage1_ms),
                stage2_ms: t(|t| t.stage2_ms),
                stage3_ms: t(|t| t.stage3_ms),
            },
        });
        start = end;
    }
    out
}

pub fn failure_summary(rows: &[TrialRow]) -> Vec<FailureSummary> {
    let mut counts: BTreeMap<Method, (usize, usize)> = BTreeMap::new();
    for r in rows {
        let c = counts.entry(r.method).or_default();
        c.1 += 1;
        if !r.ok() {
            c.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(method, (failed, total))| FailureSummary {
            method,
            failed,
            total,
            rate: failed as f64 / total as f64,
        })
        .collect()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl ResultTable {
    pub fn new(schema: &str, profile: &str, rows: Vec<TrialRow>) -> Self {
        Self {
            schema: schema.into(),
            profile: profile.into(),
            aggregates: aggregate(&rows),
            failures: failure_summary(&rows),
            rows,
        }
    }

    pub fn aggregate_for(&self, method: Method, snr_db: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.snr_db.to_bits() == snr_db.to_bits())
    }

    /// Data rows, then one `mean` row per (method, SNR) cell whose status
    /// counts the successful trials.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>, cells: [String; 10]| w.write_record(&cells).expect("write to memory");
        write(&mut w, CSV_COLUMNS.map(String::from));
        for r in &self.rows {
            write(
                &mut w,
                [
                    r.method.to_string(),
                    num(r.snr_db),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    opt(r.nmse.map(to_db)),
                    opt(r.rmse_m),
                    num(r.timings.stage1_ms),
                    num(r.timings.stage2_ms),
                    num(r.timings.stage3_ms),
                    r.status.clone(),
                ],
            );
        }
        for a in &self.aggregates {
            write(
                &mut w,
                [
                    a.method.to_string(),
                    num(a.snr_db),
                    "mean".into(),
                    String::new(),
                    num(a.nmse_db),
                    opt(a.rmse_m),
                    num(a.timings.stage1_ms),
                    num(a.timings.stage2_ms),
                    num(a.timings.stage3_ms),
                    format!("aggregate {}/{}", a.trials - a.failed, a.trials),
                ],
            );
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    /// One line per method with failures.
    pub fn failure_report(&self) -> String {
        let mut s = String::new();
        for f in self.failures.iter().filter(|f| f.failed > 0) {
            writeln!(s, "{}: {}/{} trials failed", f.method, f.failed, f.total).expect("write to string");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, trial: usize, nmse: Option<f64>) -> TrialRow {
        TrialRow {
            method,
            snr_db: 10.0,
            trial,
            seed: 7,
            nmse,
            rmse_m: nmse.map(|v| v * 2.0),
            timings: StageTimings::default(),
            status: if nmse.is_some() { STATUS_OK.into() } else { "failed: x, \"y\"".into() },
        }
    }

    #[test]
    fn aggregates_skip_failures() {
        let rows = vec![
            row(Method::ProposedSbl, 0, Some(0.1)),
            row(Method::ProposedSbl, 1, Some(0.3)),
            row(Method::ProposedSbl, 2, None),
            row(Method::Stage1Only, 0, Some(1.0)),
        ];
        let t = ResultTable::new("s", "p", rows);
        let a = &t.aggregates[0];
        assert_eq!((a.trials, a.failed), (3, 1));
        assert!((a.nmse_mean - 0.2).abs() < 1e-15);
        assert!((a.nmse_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!((a.rmse_m.unwrap() - ((0.04 + 0.36) / 2.0f64).sqrt()).abs() < 1e-15);
        assert_eq!(t.aggregates[1].nmse_std, 0.0);
        assert_eq!(t.failures[0].failed, 1);
        let csv = t.to_csv();
        assert!(csv.starts_with("method,snr_db,trial,seed,nmse_db,rmse_m,t_stage1_ms,t_stage2_ms,t_stage3_ms,status\n"));
        assert!(csv.contains("\"failed: x, \"\"y\"\"\""));
        assert_eq!(csv.lines().count(), 1 + 4 + 2);
    }
}
