//! Coordinated reviewer cluster, concentration tracking and capture mitigation.
//!
//! The cluster steers a share `s` of review slots on manuscripts by affiliated
//! authors toward its own members. The measured within-cluster co-review share
//! (over a sliding window of realized assignments) feeds an EMA concentration
//! `κ`. Detection fires after `κ` stays above threshold for `patience` steps,
//! after which the steering share decays geometrically.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::AdversaryConfig;
use crate::error::Result;
use crate::pipeline::CaptureBias;
use crate::rng::RngStream;
use crate::world::{Manuscript, ResearcherId, ReviewerId, ReviewerKind, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub t: u32,
    pub kappa: f64,
    pub consecutive_above: u32,
}

#[derive(Debug, Clone)]
pub struct CollusionState {
    pub cluster: Vec<ReviewerId>,
    pub affiliated: BTreeSet<ResearcherId>,
    pub share: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub detect_threshold: f64,
    pub patience: u32,
    pub consecutive_above: u32,
    pub intervention_active: bool,
    pub first_intervention_t: Option<u32>,
    pub mitigation_strength: f64,
    pub disabled: bool,
    pub share_growth: f64,
    pub share_growth_noise: f64,
    pub share_cap: f64,
    /// Latest measured within-cluster co-review share.
    pub measured_share: f64,
    window_len: usize,
    window: VecDeque<(usize, usize)>,
    step_within: usize,
    step_slots: usize,
}

/// `κ(t) = (1 - α) κ(t-1) + α s(t)`.
pub fn ema(kappa_prev: f64, alpha: f64, s: f64) -> f64 {
    (1.0 - alpha) * kappa_prev + alpha * s
}

impl CollusionState {
    /// Bare state with an explicit cluster, mainly for tests and tools.
    pub fn new(cfg: &AdversaryConfig, cluster: Vec<ReviewerId>, affiliated: BTreeSet<ResearcherId>) -> Self {
        Self {
            cluster,
            affiliated,
            share: 0.0,
            kappa: 0.0,
            alpha: cfg.alpha,
            detect_threshold: cfg.detect_threshold,
            patience: cfg.patience,
            consecutive_above: 0,
            intervention_active: false,
            first_intervention_t: None,
            mitigation_strength: cfg.mitigation_strength,
            disabled: cfg.disable_capture_mitigation,
            share_growth: cfg.share_growth,
            share_growth_noise: cfg.share_growth_noise,
            share_cap: cfg.share_cap,
            measured_share: 0.0,
            window_len: cfg.window.max(1),
            window: VecDeque::new(),
            step_within: 0,
            step_slots: 0,
        }
    }

    /// Marks `cluster_size` human reviewers (with researcher identities) as the
    /// cluster, and affiliates their researchers plus others up to `affiliated_authors`.
    pub fn install(cfg: &AdversaryConfig, world: &mut World, rng: &mut RngStream) -> Result<Self> {
        let humans: Vec<usize> = world
            .reviewers
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == ReviewerKind::Human && r.researcher.is_some())
            .map(|(i, _)| i)
            .collect();
        let picks = rng.sample_indices(humans.len(), cfg.cluster_size);
        let mut cluster: Vec<ReviewerId> = Vec::with_capacity(picks.len());
        let mut affiliated = BTreeSet::new();
        for p in picks {
            let r = &mut world.reviewers[humans[p]];
            r.cluster_id = Some(0);
            cluster.push(r.id);
            affiliated.insert(r.researcher.expect("filtered"));
        }
        cluster.sort_unstable();
        let others: Vec<ResearcherId> = world
            .researchers
            .iter()
            .map(|r| r.id)
            .filter(|id| !affiliated.contains(id))
            .collect();
        let extra = cfg.affiliated_authors.saturating_sub(affiliated.len());
        for i in rng.sample_indices(others.len(), extra) {
            affiliated.insert(others[i]);
        }
        Ok(Self::new(cfg, cluster, affiliated))
    }

    pub fn is_cluster_manuscript(&self, m: &Manuscript) -> bool {
        m.authors.iter().any(|a| self.affiliated.contains(a))
    }

    pub fn is_cluster_reviewer(&self, id: ReviewerId) -> bool {
        self.cluster.binary_search(&id).is_ok()
    }

    /// Advances the steering share for this timestep.
    pub fn step_share(&mut self, active: bool, rng: &mut RngStream) -> Result<f64> {
        if !active {
            self.share = 0.0;
        } else if self.intervention_active {
            self.share *= 1.0 - self.mitigation_strength;
        } else {
            let growth = self.share_growth * (1.0 + rng.normal(0.0, self.share_growth_noise)?);
            self.share = (self.share + growth.max(0.0)).min(self.share_cap);
        }
        Ok(self.share)
    }

    /// Steering to apply to `m`'s assignment, if it is a cluster manuscript.
    pub fn bias_assignment(&self, m: &Manuscript, active: bool) -> Option<CaptureBias<'_>> {
        (active && self.share > 0.0 && self.is_cluster_manuscript(m)).then_some(CaptureBias {
            cluster: &self.cluster,
            share: self.share,
        })
    }

    /// Tallies realized co-review on a cluster manuscript.
    pub fn record_assignment(&mut self, m: &Manuscript, reviewers: &[ReviewerId]) {
        if self.is_cluster_manuscript(m) {
            self.step_slots += reviewers.len();
            self.step_within += reviewers.iter().filter(|r| self.is_cluster_reviewer(**r)).count();
        }
    }

    /// Closes the timestep's tally and returns the windowed within-cluster share.
    pub fn measure(&mut self) -> f64 {
        self.window.push_back((self.step_within, self.step_slots));
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }
        self.step_within = 0;
        self.step_slots = 0;
        let (w, s) = self
            .window
            .iter()
            .fold((0usize, 0usize), |(a, b), (x, y)| (a + x, b + y));
        self.measured_share = if s == 0 { 0.0 } else { w as f64 / s as f64 };
        self.measured_share
    }

    pub fn update_kappa(&mut self, s_t: f64) -> f64 {
        self.kappa = ema(self.kappa, self.alpha, s_t).clamp(0.0, 1.0);
        self.kappa
    }

    pub fn check_detection(&mut self, t: u32) -> Option<InterventionEvent> {
        if self.kappa > self.detect_threshold {
            self.consecutive_above = (self.consecutive_above + 1).min(self.patience.max(1));
        } else {
            self.consecutive_above = 0;
        }
        if self.consecutive_above >= self.patience && !self.disabled && !self.intervention_active {
            self.intervention_active = true;
            self.first_intervention_t = Some(t);
            return Some(InterventionEvent {
                t,
                kappa: self.kappa,
                consecutive_above: self.consecutive_above,
            });
        }
        None
    }
}
