//! Triage, reviewer assignment, noisy reviews, meta-review, escalation and the decision rule.

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::governance::PolicyState;
use crate::rng::RngStream;
use crate::world::{jaccard, Manuscript, ManuscriptId, ManuscriptState, Reviewer, ReviewerId, ReviewerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub manuscript_id: ManuscriptId,
    pub reviewer_id: ReviewerId,
    pub score: f64,
    pub time_cost: f64,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaReview {
    pub manuscript_id: ManuscriptId,
    pub disagreement: f64,
    pub completeness: f64,
    pub mean_score: f64,
    pub n_reviews: usize,
    pub rounds_used: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    Revise,
}

/// What happened to a manuscript after the decision rule ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
    /// Sent back to the backlog for another pass.
    Revised,
    /// A revise verdict after the revision allowance was used up; terminal.
    ReviseExhausted,
}

#[derive(Debug, Clone, Default)]
pub struct TriageOutcome {
    /// Ranked best-first.
    pub selected: Vec<Manuscript>,
    pub deferred: Vec<Manuscript>,
    /// Deferred because the score fell below the threshold (not for lack of capacity).
    pub below_threshold: usize,
}

/// Threshold-and-rank selection over pre-scored manuscripts.
///
/// Scores at or above `tau` are ranked descending (ties: earlier arrival, then id)
/// and the first `capacity` are selected. Everything else is deferred in its
/// original order; only below-threshold manuscripts have their deferral count bumped.
pub fn triage_scored(scored: Vec<(Manuscript, f64)>, tau: f64, capacity: usize) -> TriageOutcome {
    let mut passing: Vec<(usize, f64)> = scored
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| *s >= tau)
        .map(|(i, (_, s))| (i, *s))
        .collect();
    passing.sort_by(|(ia, sa), (ib, sb)| {
        let (ma, mb) = (&scored[*ia].0, &scored[*ib].0);
        sb.total_cmp(sa)
            .then(ma.arrived_at.cmp(&mb.arrived_at))
            .then(ma.id.cmp(&mb.id))
    });
    let mut rank = vec![None; scored.len()];
    for (r, (i, _)) in passing.iter().take(capacity).enumerate() {
        rank[*i] = Some(r);
    }
    let mut selected: Vec<Option<Manuscript>> = vec![None; capacity.min(passing.len())];
    let mut out = TriageOutcome::default();
    for (i, (mut m, s)) in scored.into_iter().enumerate() {
        match rank[i] {
            Some(r) => {
                m.state = ManuscriptState::InReview;
                selected[r] = Some(m);
            }
            None => {
                if s < tau {
                    m.deferrals += 1;
                    out.below_threshold += 1;
                }
                out.deferred.push(m);
            }
        }
    }
    out.selected = selected.into_iter().flatten().collect();
    out
}

/// Scores each backlog manuscript once (`quality + N(0, triage_noise)`) and applies
/// [`triage_scored`].
pub fn triage(
    backlog: Vec<Manuscript>,
    tau: f64,
    capacity: usize,
    triage_noise: f64,
    rng: &mut RngStream,
) -> Result<TriageOutcome> {
    let mut scored = Vec::with_capacity(backlog.len());
    for m in backlog {
        let s = m.quality + rng.normal(0.0, triage_noise)?;
        scored.push((m, s));
    }
    Ok(triage_scored(scored, tau, capacity))
}

/// Steering applied by a reviewer cluster to manuscripts by affiliated authors.
#[derive(Debug, Clone, Copy)]
pub struct CaptureBias<'a> {
    pub cluster: &'a [ReviewerId],
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub reviewers: Vec<ReviewerId>,
    /// The similarity threshold had to be dropped to fill some slots.
    pub relaxed_similarity: bool,
    /// Slots filled through the capture channel.
    pub captured: usize,
}

/// Number of AI slots among `k` for fraction `rho_ai`.
pub fn ai_slots(rho_ai: f64, k: usize) -> usize {
    ((rho_ai * k as f64 + 1e-9).round() as usize).min(k)
}

fn eligible(r: &Reviewer, m: &Manuscript, max_load: u32, chosen: &[ReviewerId]) -> bool {
    r.workload < max_load
        && !chosen.contains(&r.id)
        && !r.researcher.is_some_and(|id| m.is_authored_by(id))
}

fn pick(
    pool: &[Reviewer],
    m: &Manuscript,
    kind: ReviewerKind,
    need: usize,
    s0: f64,
    max_load: u32,
    chosen: &mut Vec<ReviewerId>,
    rng: &mut RngStream,
) -> (usize, bool) {
    if need == 0 {
        return (0, false);
    }
    let candidates: Vec<ReviewerId> = pool
        .iter()
        .filter(|r| r.kind == kind && eligible(r, m, max_load, chosen))
        .filter(|r| jaccard(&m.keywords, &r.keywords) >= s0)
        .map(|r| r.id)
        .collect();
    let first: Vec<ReviewerId> = rng
        .sample_indices(candidates.len(), need)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    let mut got = first.len();
    chosen.extend(first);
    let mut relaxed = false;
    if got < need {
        // Relax the similarity floor for the shortfall only.
        let rest: Vec<ReviewerId> = pool
            .iter()
            .filter(|r| r.kind == kind && eligible(r, m, max_load, chosen))
            .map(|r| r.id)
            .collect();
        let extra: Vec<ReviewerId> = rng
            .sample_indices(rest.len(), need - got)
            .into_iter()
            .map(|i| rest[i])
            .collect();
        relaxed = true;
        got += extra.len();
        chosen.extend(extra);
    }
    (got, relaxed)
}

/// Picks up to `k` distinct, non-conflicted, under-capacity reviewers:
/// `round(rho_ai * k)` from the AI pool, the rest human, preferring keyword
/// similarity `>= s0`. Selected reviewers' workloads are incremented.
#[allow(clippy::too_many_arguments)]
pub fn assign_reviewers(
    m: &Manuscript,
    pool: &mut [Reviewer],
    rho_ai: f64,
    k: usize,
    s0: f64,
    max_load: u32,
    bias: Option<CaptureBias<'_>>,
    rng: &mut RngStream,
) -> Assignment {
    let mut chosen: Vec<ReviewerId> = Vec::with_capacity(k);
    let mut captured = 0;
    if let Some(b) = bias.filter(|b| b.share > 0.0 && !b.cluster.is_empty()) {
        let want = (0..k).filter(|_| rng.bernoulli(b.share)).count();
        if want > 0 {
            let candidates: Vec<ReviewerId> = b
                .cluster
                .iter()
                .copied()
                .filter(|id| {
                    pool.get(*id as usize)
                        .is_some_and(|r| eligible(r, m, max_load, &chosen))
                })
                .collect();
            let picked: Vec<ReviewerId> = rng
                .sample_indices(candidates.len(), want)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            captured = picked.len();
            chosen.extend(picked);
        }
    }
    let open = k - captured;
    let n_ai = ai_slots(rho_ai, k).min(open);
    let n_human = open - n_ai;
    let (_, relaxed_ai) = pick(pool, m, ReviewerKind::Ai, n_ai, s0, max_load, &mut chosen, rng);
    let (_, relaxed_h) = pick(pool, m, ReviewerKind::Human, n_human, s0, max_load, &mut chosen, rng);
    for id in &chosen {
        pool[*id as usize].workload += 1;
    }
    Assignment {
        reviewers: chosen,
        relaxed_similarity: relaxed_ai || relaxed_h,
        captured,
    }
}

/// Review noise standard deviation for manuscript complexity `x` and reviewer `r`.
pub fn noise_sigma(cfg: &PipelineConfig, x: f64, r: &Reviewer, noise_multiplier: f64) -> f64 {
    let kind = match r.kind {
        ReviewerKind::Ai => cfg.ai_noise_multiplier,
        ReviewerKind::Human => 1.0,
    };
    (cfg.noise_base + cfg.noise_complexity_gain * x) * r.reliability * kind * noise_multiplier
}

/// One noisy review: `score = clamp(q + N(0, sigma^2), 0, 1)` and a log-normal time cost.
pub fn generate_review(
    m: &Manuscript,
    r: &Reviewer,
    noise_multiplier: f64,
    round: u32,
    cfg: &PipelineConfig,
    rng: &mut RngStream,
) -> Result<Review> {
    if !(noise_multiplier > 0.0) {
        return Err(Error::Config(format!("noise multiplier {noise_multiplier} must be positive")));
    }
    let sigma = noise_sigma(cfg, m.complexity, r, noise_multiplier);
    let score = (m.quality + rng.normal(0.0, sigma)?).clamp(0.0, 1.0);
    let mut time_cost = rng.lognormal(cfg.time_mu, cfg.time_sigma)?;
    if r.kind == ReviewerKind::Ai {
        time_cost *= cfg.ai_time_multiplier;
    }
    Ok(Review {
        manuscript_id: m.id,
        reviewer_id: r.id,
        score,
        time_cost,
        round,
    })
}

/// Disagreement and completeness come from the latest round; the mean uses every round.
pub fn aggregate_meta(m: &Manuscript, k_reviewers: usize) -> Result<MetaReview> {
    let last_round = m.reviews.iter().map(|r| r.round).max().ok_or(Error::NoReviews(m.id))?;
    let current: Vec<f64> = m
        .reviews
        .iter()
        .filter(|r| r.round == last_round)
        .map(|r| r.score)
        .collect();
    let max = current.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = current.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = m.reviews.iter().map(|r| r.score).sum::<f64>() / m.reviews.len() as f64;
    Ok(MetaReview {
        manuscript_id: m.id,
        disagreement: max - min,
        completeness: (current.len() as f64 / k_reviewers.max(1) as f64).min(1.0),
        mean_score: mean,
        n_reviews: m.reviews.len(),
        rounds_used: m.rounds_used,
    })
}

pub fn maybe_escalate(meta: &MetaReview, policy: &PolicyState, cfg: &PipelineConfig) -> bool {
    policy.escalation_enabled
        && (meta.disagreement > cfg.disc_th || meta.completeness < cfg.comp_th)
        && meta.rounds_used < cfg.max_rounds
}

pub fn decide(meta: &MetaReview, cfg: &PipelineConfig) -> Decision {
    if meta.mean_score >= cfg.accept_th {
        Decision::Accept
    } else if meta.mean_score < cfg.reject_th {
        Decision::Reject
    } else {
        Decision::Revise
    }
}

/// Applies a decision to the manuscript. A revise verdict within the revision
/// allowance resets the manuscript for another pass with a small quality bump.
pub fn apply_decision(m: &mut Manuscript, decision: Decision, cfg: &PipelineConfig) -> Outcome {
    match decision {
        Decision::Accept => {
            m.state = ManuscriptState::Accepted;
            Outcome::Accepted
        }
        Decision::Reject => {
            m.state = ManuscriptState::Rejected;
            Outcome::Rejected
        }
        Decision::Revise if m.revision_count < cfg.max_revisions => {
            m.state = ManuscriptState::Backlog;
            m.revision_count += 1;
            m.quality = (m.quality + cfg.revise_quality_bump).clamp(0.0, 1.0);
            m.reviews.clear();
            m.rounds_used = 0;
            m.deferrals = 0;
            Outcome::Revised
        }
        Decision::Revise => {
            m.state = ManuscriptState::Rejected;
            Outcome::ReviseExhausted
        }
    }
}

/// Returns each reviewer's slot at the end of the timestep.
pub fn release_workloads(completed: &[ReviewerId], pool: &mut [Reviewer]) -> Result<()> {
    for id in completed {
        let r = pool
            .get_mut(*id as usize)
            .ok_or_else(|| Error::Consistency(format!("release for unknown reviewer {id}")))?;
        r.workload = r.workload.saturating_sub(1);
    }
    Ok(())
}

/// Reviewer pool sanity: nobody above `max_load`.
pub fn workloads_within_cap(pool: &[Reviewer], world: &WorldConfig) -> bool {
    pool.iter().all(|r| r.workload <= world.max_load)
}
