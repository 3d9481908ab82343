//! Delayed post-publication impact and the retrospective credit ledger.
//!
//! Accepted manuscripts accrue a citation-like count for a bounded horizon.
//! Credit is updated from the trailing-mean smoothed impact; decisions already
//! taken are never revisited.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::PostpubConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::world::{ManuscriptId, ResearcherId, ReviewerId};

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Expected per-step impact `ξ·σ(q − q0)`.
pub fn expected_impact(q: f64, cfg: &PostpubConfig) -> f64 {
    cfg.xi * sigmoid(q - cfg.q0)
}

pub fn impact_increment(q: f64, cfg: &PostpubConfig, rng: &mut RngStream) -> Result<u64> {
    rng.poisson(expected_impact(q, cfg))
}

/// Trailing moving average; the first values average over what is available.
pub fn smooth_impact(raw: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config("smoothing window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut sum = 0.0;
    for (i, x) in raw.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= raw[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Sign agreement between an ex ante score and the ex post outcome.
pub fn calibration_sign(score: f64, midpoint: f64, c: f64, c_bar: f64) -> f64 {
    let a = score - midpoint;
    let b = c - c_bar;
    if a == 0.0 || b == 0.0 {
        0.0
    } else if (a > 0.0) == (b > 0.0) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreditLedger {
    pub author_credit: BTreeMap<ResearcherId, f64>,
    pub reviewer_credit: BTreeMap<ReviewerId, f64>,
    pub alpha_a: f64,
    pub alpha_r: f64,
    pub c_bar: f64,
}

impl CreditLedger {
    pub fn new(cfg: &PostpubConfig) -> Self {
        Self {
            alpha_a: cfg.alpha_a,
            alpha_r: cfg.alpha_r,
            c_bar: cfg.c_bar,
            ..Self::default()
        }
    }

    pub fn register_author(&mut self, id: ResearcherId) {
        self.author_credit.entry(id).or_insert(0.0);
    }

    pub fn register_reviewer(&mut self, id: ReviewerId) {
        self.reviewer_credit.entry(id).or_insert(0.0);
    }

    /// `S_a += α_a (C − C̄)` for every coauthor.
    pub fn update_author_credit(&mut self, authors: &[ResearcherId], c: f64) -> Result<()> {
        let delta = self.alpha_a * (c - self.c_bar);
        for a in authors {
            let s = self
                .author_credit
                .get_mut(a)
                .ok_or_else(|| Error::Consistency(format!("credit ledger has no author {a}")))?;
            *s += delta;
        }
        Ok(())
    }

    /// `S_r += α_r φ_r` with `φ_r` the sign agreement of score and impact.
    pub fn update_reviewer_credit(&mut self, reviewer: ReviewerId, score: f64, c: f64, midpoint: f64) -> Result<()> {
        let phi = calibration_sign(score, midpoint, c, self.c_bar);
        let s = self
            .reviewer_credit
            .get_mut(&reviewer)
            .ok_or_else(|| Error::Consistency(format!("credit ledger has no reviewer {reviewer}")))?;
        *s += self.alpha_r * phi;
        Ok(())
    }

    pub fn mean_author_credit(&self) -> f64 {
        mean(self.author_credit.values())
    }

    pub fn mean_reviewer_credit(&self) -> f64 {
        mean(self.reviewer_credit.values())
    }
}

fn mean<'a>(it: impl ExactSizeIterator<Item = &'a f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// An accepted manuscript still accruing impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub manuscript_id: ManuscriptId,
    pub quality: f64,
    pub accepted_t: u32,
    pub authors: Vec<ResearcherId>,
    /// `(reviewer, score)` for every review that informed the decision.
    pub reviews: Vec<(ReviewerId, f64)>,
    pub impact: Vec<f64>,
}

/// What one credit pass realized.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CreditPass {
    pub realized: u64,
    pub publications: usize,
    /// Mean smoothed impact minus `C̄`, when anything was realized.
    pub impact_gap: Option<f64>,
}

/// Publications within their impact horizon plus the credit ledger.
#[derive(Debug, Clone, Default)]
pub struct PostPublication {
    pub active: VecDeque<Publication>,
    pub ledger: CreditLedger,
    pub cumulative_impact: u64,
}

impl PostPublication {
    pub fn new(cfg: &PostpubConfig) -> Self {
        Self {
            active: VecDeque::new(),
            ledger: CreditLedger::new(cfg),
            cumulative_impact: 0,
        }
    }

    pub fn publish(&mut self, p: Publication) {
        for a in &p.authors {
            self.ledger.register_author(*a);
        }
        for (r, _) in &p.reviews {
            self.ledger.register_reviewer(*r);
        }
        self.active.push_back(p);
    }

    /// Realizes one step of impact for every publication accepted before `t`
    /// and still inside its horizon, in manuscript-id order, then retires
    /// publications whose horizon is exhausted.
    pub fn step(&mut self, t: u32, cfg: &PostpubConfig, midpoint: f64, rng: &mut RngStream) -> Result<CreditPass> {
        let mut pass = CreditPass::default();
        let mut gap_sum = 0.0;
        let mut order: Vec<usize> = (0..self.active.len())
            .filter(|&i| self.active[i].accepted_t < t)
            .collect();
        order.sort_by_key(|&i| self.active[i].manuscript_id);
        for i in order {
            let q = self.active[i].quality;
            let dc = impact_increment(q, cfg, rng)?;
            let p = &mut self.active[i];
            p.impact.push(dc as f64);
            let lo = p.impact.len().saturating_sub(cfg.smoothing_window.max(1));
            let c = p.impact[lo..].iter().sum::<f64>() / (p.impact.len() - lo) as f64;
            let authors = p.authors.clone();
            let mut reviews = p.reviews.clone();
            reviews.sort_by_key(|r| r.0);
            self.ledger.update_author_credit(&authors, c)?;
            for (r, score) in reviews {
                self.ledger.update_reviewer_credit(r, score, c, midpoint)?;
            }
            pass.realized += dc;
            pass.publications += 1;
            gap_sum += c - self.ledger.c_bar;
        }
        if pass.publications > 0 {
            pass.impact_gap = Some(gap_sum / pass.publications as f64);
        }
        self.cumulative_impact += pass.realized;
        self.active.retain(|p| (p.impact.len() as u32) < cfg.horizon);
        Ok(pass)
    }
}
