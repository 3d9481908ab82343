//! Per-timestep metrics rows and the `metrics.csv` writer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::fmt_real;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 20] = [
    "t",
    "backlog",
    "processed",
    "mean_disagreement",
    "mean_load",
    "max_load",
    "rho_ai",
    "tau",
    "escalation_enabled",
    "escalations",
    "accepted",
    "rejected",
    "revised",
    "concentration",
    "within_cluster_share",
    "intervention_active",
    "mean_author_credit",
    "mean_reviewer_credit",
    "cumulative_impact",
    "objective_U",
];

/// One timestep. `accepted`/`rejected`/`revised` count this step's decisions;
/// `rho_ai`, `tau` and `escalation_enabled` are the policy in force after the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u32,
    pub backlog: usize,
    pub processed: usize,
    pub mean_disagreement: f64,
    pub mean_load: f64,
    pub max_load: u32,
    pub rho_ai: f64,
    pub tau: f64,
    pub escalation_enabled: bool,
    pub escalations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub revised: usize,
    pub concentration: f64,
    pub within_cluster_share: f64,
    pub intervention_active: bool,
    pub mean_author_credit: f64,
    pub mean_reviewer_credit: f64,
    pub cumulative_impact: u64,
    #[serde(rename = "objective_U")]
    pub objective_u: f64,
}

pub fn header_line() -> String {
    COLUMNS.join(",")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        [
            self.t.to_string(),
            self.backlog.to_string(),
            self.processed.to_string(),
            fmt_real(self.mean_disagreement),
            fmt_real(self.mean_load),
            self.max_load.to_string(),
            fmt_real(self.rho_ai),
            fmt_real(self.tau),
            flag(self.escalation_enabled).to_string(),
            self.escalations.to_string(),
            self.accepted.to_string(),
            self.rejected.to_string(),
            self.revised.to_string(),
            fmt_real(self.concentration),
            fmt_real(self.within_cluster_share),
            flag(self.intervention_active).to_string(),
            fmt_real(self.mean_author_credit),
            fmt_real(self.mean_reviewer_credit),
            self.cumulative_impact.to_string(),
            fmt_real(self.objective_u),
        ]
        .join(",")
    }

    /// Parses a line written by [`MetricsRow::to_csv_line`].
    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != COLUMNS.len() {
            return Err(Error::Consistency(format!(
                "metrics line has {} fields, expected {}",
                f.len(),
                COLUMNS.len()
            )));
        }
        fn num<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::Consistency(format!("bad value {s:?} in column {col}")))
        }
        let b = |i: usize| -> Result<bool> { Ok(num::<u8>(f[i], COLUMNS[i])? != 0) };
        Ok(Self {
            t: num(f[0], COLUMNS[0])?,
            backlog: num(f[1], COLUMNS[1])?,
            processed: num(f[2], COLUMNS[2])?,
            mean_disagreement: num(f[3], COLUMNS[3])?,
            mean_load: num(f[4], COLUMNS[4])?,
            max_load: num(f[5], COLUMNS[5])?,
            rho_ai: num(f[6], COLUMNS[6])?,
            tau: num(f[7], COLUMNS[7])?,
            escalation_enabled: b(8)?,
            escalations: num(f[9], COLUMNS[9])?,
            accepted: num(f[10], COLUMNS[10])?,
            rejected: num(f[11], COLUMNS[11])?,
            revised: num(f[12], COLUMNS[12])?,
            concentration: num(f[13], COLUMNS[13])?,
            within_cluster_share: num(f[14], COLUMNS[14])?,
            intervention_active: b(15)?,
            mean_author_credit: num(f[16], COLUMNS[16])?,
            mean_reviewer_credit: num(f[17], COLUMNS[17])?,
            cumulative_impact: num(f[18], COLUMNS[18])?,
            objective_u: num(f[19], COLUMNS[19])?,
        })
    }
}

/// Writes the header once and enforces contiguous `t`.
pub struct MetricsWriter<W: Write> {
    out: W,
    rows: u32,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{}", header_line())?;
        Ok(Self { out, rows: 0 })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        if row.t != self.rows {
            return Err(Error::Consistency(format!(
                "metrics row for t={} but {} rows written",
                row.t, self.rows
            )));
        }
        writeln!(self.out, "{}", row.to_csv_line())?;
        self.rows += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads a `metrics.csv` written by [`MetricsWriter`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header_line() => {}
        _ => return Err(Error::Consistency(format!("{} lacks the metrics header", path.display()))),
    }
    lines.map(MetricsRow::from_csv_line).collect()
}
