//! Per-iteration diagnostics and their CSV forms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "iteration,effective_passes,elbo_T1,heldout,expected_T,rate,wallclock_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub effective_passes: f64,
    pub elbo_t1: Option<f64>,
    /// Held-out predictive log-likelihood per word.
    pub heldout: Option<f64>,
    pub expected_t: f64,
    pub rate: f64,
    pub wallclock_s: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.effective_passes,
            opt(self.elbo_t1),
            opt(self.heldout),
            self.expected_t,
            self.rate,
            opt(self.wallclock_s)
        )
    }

    fn parse(line: &str, path: &Path, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(path, lineno, format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number `{s}`")))
        };
        let opt_num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        Ok(Self {
            iteration: fields[0]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad iteration `{}`", fields[0])))?,
            effective_passes: num(fields[1])?,
            elbo_t1: opt_num(fields[2])?,
            heldout: opt_num(fields[3])?,
            expected_t: num(fields[4])?,
            rate: num(fields[5])?,
            wallclock_s: opt_num(fields[6])?,
        })
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == METRICS_HEADER {
            continue;
        }
        rows.push(MetricsRow::parse(line, path, i + 1)?);
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text, path)
}

/// Long format, one `run,iteration,effective_passes,metric,value` line per
/// available value, for plotting tools.
pub fn export_long(runs: &[(String, Vec<MetricsRow>)]) -> String {
    let mut out = String::from("run,iteration,effective_passes,metric,value\n");
    for (name, rows) in runs {
        for r in rows {
            let values = [
                ("elbo_T1", r.elbo_t1),
                ("heldout", r.heldout),
                ("expected_T", Some(r.expected_t)),
                ("rate", Some(r.rate)),
                ("wallclock_s", r.wallclock_s),
            ];
            for (metric, v) in values {
                if let Some(v) = v {
                    let _ = writeln!(out, "{name},{},{},{metric},{v}", r.iteration, r.effective_passes);
                }
            }
        }
    }
    out
}
