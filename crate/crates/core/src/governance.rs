//! The bounded policy controller.
//!
//! The controller only sees aggregate signals. Two rules drive it:
//!
//! * backlog: sustained `B > backlog_high` raises both the AI fraction and the
//!   triage threshold by one step; sustained `B < backlog_low` lowers both;
//! * disagreement: `D̄ > disagreement_high` raises the threshold and enables
//!   escalation; sustained calm disables escalation again. While it fires, the
//!   low-backlog rule may still lower the AI fraction but not the threshold.
//!
//! "Sustained" means the condition held on the last `hysteresis_steps`
//! snapshots, the current one included. Results are clamped to
//! `[ai_min, ai_max]` and `[triage_th0, tau_max]`.

use serde::{Deserialize, Serialize};

use crate::config::{GovernanceConfig, ObjectiveWeights};
use crate::world::Reviewer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub tau: f64,
    pub rho_ai: f64,
    pub escalation_enabled: bool,
}

impl PolicyState {
    pub fn initial(cfg: &GovernanceConfig) -> Self {
        Self {
            tau: cfg.triage_th0,
            rho_ai: cfg.ai_fraction_initial,
            escalation_enabled: cfg.escalation_initial,
        }
    }

    pub fn within_bounds(&self, cfg: &GovernanceConfig) -> bool {
        (cfg.ai_min..=cfg.ai_max).contains(&self.rho_ai)
            && (cfg.triage_th0..=cfg.tau_max).contains(&self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSnapshot {
    pub t: u32,
    pub backlog: usize,
    pub mean_disagreement: f64,
    pub mean_load: f64,
    pub max_load_observed: u32,
    pub concentration: f64,
    pub processed: usize,
    pub escalations: usize,
    pub perf: f64,
    /// Smoothed post-publication impact minus its nominal level, when any is accruing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyField {
    RhoAi,
    Tau,
    EscalationEnabled,
}

/// One changed policy field, for the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub field: PolicyField,
    pub old: serde_json::Value,
    pub new: serde_json::Value,
    pub trigger: String,
}

/// Inputs gathered after the decision step of a timestep.
#[derive(Debug, Clone, Default)]
pub struct SignalInputs<'a> {
    pub t: u32,
    pub backlog: usize,
    pub disagreements: &'a [f64],
    pub reviewers: &'a [Reviewer],
    pub concentration: f64,
    pub escalations: usize,
    pub capacity: usize,
    pub impact_gap: Option<f64>,
}

pub fn collect_signals(inp: SignalInputs<'_>) -> SignalSnapshot {
    let processed = inp.disagreements.len();
    let mean_disagreement = if processed == 0 {
        0.0
    } else {
        inp.disagreements.iter().sum::<f64>() / processed as f64
    };
    let mean_load = if inp.reviewers.is_empty() {
        0.0
    } else {
        inp.reviewers.iter().map(|r| r.workload as f64).sum::<f64>() / inp.reviewers.len() as f64
    };
    SignalSnapshot {
        t: inp.t,
        backlog: inp.backlog,
        mean_disagreement,
        mean_load,
        max_load_observed: inp.reviewers.iter().map(|r| r.workload).max().unwrap_or(0),
        concentration: inp.concentration,
        processed,
        escalations: inp.escalations,
        perf: if inp.capacity == 0 { 0.0 } else { processed as f64 / inp.capacity as f64 },
        impact_gap: inp.impact_gap,
    }
}

/// Stylized governance utility; reported, never optimized.
pub fn objective(s: &SignalSnapshot, w: &ObjectiveWeights) -> f64 {
    -w.w_b * s.backlog as f64 - w.w_d * s.mean_disagreement - w.w_l * s.mean_load
        - w.w_c * s.concentration
        + w.w_p * s.perf
}

fn sustained(
    s: &SignalSnapshot,
    history: &[SignalSnapshot],
    n: usize,
    pred: impl Fn(&SignalSnapshot) -> bool,
) -> bool {
    if n == 0 {
        return pred(s);
    }
    pred(s) && history.len() + 1 >= n && history.iter().rev().take(n - 1).all(&pred)
}

fn quantize(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Applies one bounded update. `history` holds earlier snapshots, oldest first,
/// and excludes `s`.
pub fn update_policy(
    policy: &PolicyState,
    s: &SignalSnapshot,
    cfg: &GovernanceConfig,
    history: &[SignalSnapshot],
) -> (PolicyState, Vec<PolicyChange>) {
    let h = cfg.hysteresis_steps;
    let mut d_rho = 0.0;
    let mut d_tau = 0.0;
    let mut rho_why: Vec<&str> = Vec::new();
    let mut tau_why: Vec<&str> = Vec::new();
    let mut esc = policy.escalation_enabled;
    let mut esc_why = "";

    let disagreeing = s.mean_disagreement > cfg.disagreement_high;
    if sustained(s, history, h, |x| x.backlog > cfg.backlog_high) {
        d_rho += cfg.ai_step;
        d_tau += cfg.triage_step;
        rho_why.push("backlog_high");
        tau_why.push("backlog_high");
    } else if sustained(s, history, h, |x| x.backlog < cfg.backlog_low) {
        d_rho -= cfg.ai_step;
        rho_why.push("backlog_low");
        // Selectivity is not relaxed while reviewers disagree.
        if !disagreeing {
            d_tau -= cfg.triage_step;
            tau_why.push("backlog_low");
        }
    }

    if disagreeing {
        d_tau += cfg.triage_step;
        tau_why.push("disagreement_high");
        if !esc {
            esc = true;
            esc_why = "disagreement_high";
        }
    } else if esc && sustained(s, history, h, |x| x.mean_disagreement <= cfg.disagreement_high) {
        esc = false;
        esc_why = "disagreement_normal";
    }

    if cfg.impact_feedback && tau_why.is_empty() {
        let slow = 10 * h;
        let slow_step = cfg.triage_step / 5.0;
        if sustained(s, history, slow, |x| x.impact_gap.is_some_and(|g| g < 0.0)) {
            d_tau += slow_step;
            tau_why.push("impact_low");
        } else if sustained(s, history, slow, |x| x.impact_gap.is_some_and(|g| g > 0.0)) {
            d_tau -= slow_step;
            tau_why.push("impact_high");
        }
    }

    // Clamp last: rounding must not carry a value past an off-grid bound.
    let rho = quantize(policy.rho_ai + cfg.eta * d_rho).clamp(cfg.ai_min, cfg.ai_max);
    let tau = quantize(policy.tau + cfg.eta * d_tau).clamp(cfg.triage_th0, cfg.tau_max);
    let next = PolicyState {
        tau,
        rho_ai: rho,
        escalation_enabled: esc,
    };

    let mut changes = Vec::new();
    if next.rho_ai != policy.rho_ai {
        changes.push(PolicyChange {
            field: PolicyField::RhoAi,
            old: policy.rho_ai.into(),
            new: next.rho_ai.into(),
            trigger: rho_why.join("+"),
        });
    }
    if next.tau != policy.tau {
        changes.push(PolicyChange {
            field: PolicyField::Tau,
            old: policy.tau.into(),
            new: next.tau.into(),
            trigger: tau_why.join("+"),
        });
    }
    if next.escalation_enabled != policy.escalation_enabled {
        changes.push(PolicyChange {
            field: PolicyField::EscalationEnabled,
            old: policy.escalation_enabled.into(),
            new: next.escalation_enabled.into(),
            trigger: esc_why.to_string(),
        });
    }
    (next, changes)
}
