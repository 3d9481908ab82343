//! Aggregate statistics over batches of run summaries.

use serde::{Deserialize, Serialize};

use crate::summary::Summary;

/// Median (lower median for even counts), minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

/// `None` for an empty sample.
pub fn stat(values: &[f64]) -> Option<Stat> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Stat {
        median: v[(v.len() - 1) / 2],
        min: v[0],
        max: v[v.len() - 1],
        n: v.len(),
    })
}

/// Summary fields that batch reports aggregate.
pub const FIELDS: [&str; 8] = [
    "final_backlog",
    "tau_final",
    "rho_ai_final",
    "total_escalations",
    "max_escalations_per_step",
    "first_intervention_t",
    "max_concentration",
    "final_concentration",
];

pub fn field(s: &Summary, name: &str) -> Option<f64> {
    Some(match name {
        "final_backlog" => s.final_backlog as f64,
        "tau_final" => s.tau_final,
        "rho_ai_final" => s.rho_ai_final,
        "total_escalations" => s.total_escalations as f64,
        "max_escalations_per_step" => s.max_escalations_per_step as f64,
        "first_intervention_t" => s.first_intervention_t? as f64,
        "final_concentration" => s.final_concentration,
        "max_concentration" => s.max_concentration,
        "accepted" => s.accepted as f64,
        _ => return None,
    })
}

/// Per-field statistics over `summaries`; fields absent everywhere are skipped.
pub fn aggregate(summaries: &[Summary]) -> Vec<(String, Stat)> {
    FIELDS
        .iter()
        .filter_map(|f| {
            let vals: Vec<f64> = summaries.iter().filter_map(|s| field(s, f)).collect();
            stat(&vals).map(|st| (f.to_string(), st))
        })
        .collect()
}
