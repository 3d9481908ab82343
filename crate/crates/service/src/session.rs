//! A live simulation plus everything it has emitted so far.

use govsim_core::audit::{normalize, AuditEvent};
use govsim_core::governance::SignalSnapshot;
use govsim_core::metrics::{header_line, MetricsRow};
use govsim_core::{Result, Simulation, Summary};
use serde_json::Value;

/// Commands on one session are serialized by the caller (single writer).
#[derive(Debug, Clone)]
pub struct Session {
    sim: Simulation,
    rows: Vec<MetricsRow>,
    events: Vec<AuditEvent>,
}

impl Session {
    pub fn new(sim: Simulation) -> Self {
        Self {
            sim,
            rows: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn t(&self) -> u32 {
        self.sim.t()
    }

    pub fn is_finished(&self) -> bool {
        self.sim.is_finished()
    }

    /// Runs up to `n` steps, stopping at the horizon.
    pub fn advance(&mut self, n: u32) -> Result<Vec<SignalSnapshot>> {
        let mut snaps = Vec::new();
        for _ in 0..n {
            if self.sim.is_finished() {
                break;
            }
            let out = self.sim.step()?;
            self.rows.push(out.row);
            self.events.extend(out.events);
            snaps.push(out.snapshot);
        }
        Ok(snaps)
    }

    /// Adds a stress window from the current step; returns the steering events.
    pub fn inject(&mut self, path: &str, value: Value, duration: Option<u32>) -> Result<Vec<AuditEvent>> {
        let evs = self.sim.inject(path, value, duration)?;
        self.events.extend(evs.iter().cloned());
        Ok(evs)
    }

    pub fn rows_since(&self, since_t: u32) -> &[MetricsRow] {
        let start = (since_t as usize).min(self.rows.len());
        &self.rows[start..]
    }

    pub fn events_since(&self, since_seq: u64) -> &[AuditEvent] {
        let start = (since_seq.min(self.events.len() as u64)) as usize;
        &self.events[start..]
    }

    /// Rows as JSON objects with reals at six significant digits.
    pub fn rows_json(&self, since_t: u32) -> Value {
        let v = serde_json::to_value(self.rows_since(since_t)).expect("rows serialize");
        normalize(&v)
    }

    /// Same bytes as the `metrics.csv` a CLI run writes, restricted to `t >= since_t`.
    pub fn metrics_csv(&self, since_t: u32) -> String {
        let mut out = header_line();
        out.push('\n');
        for r in self.rows_since(since_t) {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Same bytes as the corresponding slice of `events.jsonl`.
    pub fn events_jsonl(&self, since_seq: u64) -> String {
        self.events_since(since_seq).iter().map(|e| e.to_line() + "\n").collect()
    }

    pub fn summary(&self) -> Summary {
        self.sim.summary()
    }
}
