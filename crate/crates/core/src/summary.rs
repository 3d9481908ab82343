//! End-of-run `summary.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::normalize;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    #[serde(rename = "horizon_T")]
    pub horizon_t: u32,
    pub steps_completed: u32,
    /// Manuscripts awaiting processing after the last step.
    pub final_backlog: usize,
    /// Revised manuscripts with their authors, due back at the next intake.
    pub in_revision_final: usize,
    pub rho_ai_final: f64,
    pub tau_final: f64,
    pub escalation_enabled_final: bool,
    pub total_escalations: u64,
    pub max_escalations_per_step: u64,
    pub arrivals: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub desk_rejected: u64,
    pub revise_exhausted: u64,
    pub revisions: u64,
    pub policy_changes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_intervention_t: Option<u32>,
    pub max_concentration: f64,
    pub final_concentration: f64,
    pub cumulative_impact: u64,
    pub mean_author_credit_final: f64,
    pub mean_reviewer_credit_final: f64,
    pub events: u64,
    pub chain_head: String,
    pub config_hash: String,
}

impl Summary {
    /// Pretty JSON with reals at six significant digits.
    pub fn to_json(&self) -> String {
        let v = normalize(&serde_json::to_value(self).expect("summary serializes"));
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
