//! The per-timestep loop and run orchestration.
//!
//! One step: effective parameters → arrivals → triage (with desk rejection) →
//! assignment, review, meta-review and escalation for each selected manuscript
//! in rank order while the review budget lasts → decisions → collusion
//! measurement → post-publication credit → signals and policy update → audit
//! events and metrics row → workload release.
//!
//! A [`Simulation`] is a plain value: cloning it forks the run, including every
//! random stream and the audit chain head.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::adversary::CollusionState;
use crate::audit::{AuditChain, AuditEvent, EventKind, EventWriter};
use crate::config::{check_window_path, ScenarioConfig, StressWindow};
use crate::error::{Error, Result};
use crate::governance::{
    collect_signals, objective, update_policy, PolicyChange, PolicyState, SignalInputs, SignalSnapshot,
};
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::pipeline::{
    aggregate_meta, apply_decision, assign_reviewers, decide, generate_review, maybe_escalate,
    release_workloads, triage_scored, workloads_within_cap, Outcome,
};
use crate::postpub::{PostPublication, Publication};
use crate::rng::RngStream;
use crate::summary::Summary;
use crate::world::{Manuscript, ManuscriptState, ReviewerId, World};

/// Independent random substreams, one per module.
#[derive(Debug, Clone)]
struct Streams {
    arrivals: RngStream,
    assignment: RngStream,
    review: RngStream,
    adversary: RngStream,
    postpub: RngStream,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            arrivals: RngStream::new(seed, "world.arrivals"),
            assignment: RngStream::new(seed, "pipeline.assignment"),
            review: RngStream::new(seed, "pipeline.review"),
            adversary: RngStream::new(seed, "adversary"),
            postpub: RngStream::new(seed, "postpub"),
        }
    }
}

/// Cumulative manuscript flow, used for the conservation check and the summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub arrivals: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub desk_rejected: u64,
    pub revise_exhausted: u64,
    pub revisions: u64,
    pub escalations: u64,
    pub max_escalations_per_step: u64,
    pub policy_changes: u64,
}

/// What one call to [`Simulation::step`] produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub snapshot: SignalSnapshot,
    pub row: MetricsRow,
    pub events: Vec<AuditEvent>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: ScenarioConfig,
    t: u32,
    world: World,
    backlog: Vec<Manuscript>,
    /// Revise verdicts out with their authors; resubmitted at the next intake.
    in_revision: Vec<Manuscript>,
    policy: PolicyState,
    adversary: Option<CollusionState>,
    postpub: PostPublication,
    history: VecDeque<SignalSnapshot>,
    history_cap: usize,
    chain: AuditChain,
    started: bool,
    streams: Streams,
    counters: Counters,
    max_concentration: f64,
    last_snapshot: Option<SignalSnapshot>,
}

impl Simulation {
    pub fn new(scenario: ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        let mut init = RngStream::new(scenario.seed, "world.init");
        let mut world = World::new(&scenario.world, &mut init)?;
        let adversary = if scenario.adversary.enabled {
            let mut rng = RngStream::new(scenario.seed, "adversary.init");
            Some(CollusionState::install(&scenario.adversary, &mut world, &mut rng)?)
        } else {
            None
        };
        let h = scenario.governance.hysteresis_steps.max(1);
        Ok(Self {
            policy: PolicyState::initial(&scenario.governance),
            postpub: PostPublication::new(&scenario.postpub),
            streams: Streams::new(scenario.seed),
            history_cap: 10 * h + 1,
            scenario,
            t: 0,
            world,
            backlog: Vec::new(),
            in_revision: Vec::new(),
            adversary,
            history: VecDeque::new(),
            chain: AuditChain::new(),
            started: false,
            counters: Counters::default(),
            max_concentration: 0.0,
            last_snapshot: None,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.scenario.horizon_t
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn backlog(&self) -> &[Manuscript] {
        &self.backlog
    }

    pub fn in_revision(&self) -> &[Manuscript] {
        &self.in_revision
    }

    pub fn adversary(&self) -> Option<&CollusionState> {
        self.adversary.as_ref()
    }

    pub fn postpub(&self) -> &PostPublication {
        &self.postpub
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn chain(&self) -> &AuditChain {
        &self.chain
    }

    fn emit(&mut self, out: &mut Vec<AuditEvent>, kind: EventKind, payload: Value) {
        out.push(self.chain.append(self.t, kind, payload));
    }

    fn ensure_started(&mut self, out: &mut Vec<AuditEvent>) {
        if self.started {
            return;
        }
        self.started = true;
        let s = &self.scenario;
        let payload = json!({
            "event": "start",
            "scenario": s.name,
            "seed": s.seed,
            "horizon_T": s.horizon_t,
            "config_hash": s.config_hash(),
            "source": s.provenance.source,
            "overrides": s.provenance.overrides.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
        });
        self.emit(out, EventKind::RunMeta, payload);
    }

    /// Adds a stress window starting at the current timestep. Its `run_meta`
    /// event is returned so it precedes every event the window affects.
    pub fn inject(&mut self, path: &str, value: Value, duration: Option<u32>) -> Result<Vec<AuditEvent>> {
        if self.is_finished() {
            return Err(Error::Config("cannot inject into a finished run".into()));
        }
        let base = serde_json::to_value(&self.scenario)?;
        check_window_path(&base, path, &value)?;
        let end_t = match duration {
            Some(0) => return Err(Error::Config("injection duration must be >= 1".into())),
            Some(d) => self.t.saturating_add(d).min(self.scenario.horizon_t),
            None => self.scenario.horizon_t,
        };
        let win = StressWindow {
            start_t: self.t,
            end_t,
            path: path.to_string(),
            value: value.clone(),
        };
        let mut out = Vec::new();
        self.ensure_started(&mut out);
        self.scenario.windows.push(win);
        self.scenario.validate()?;
        self.emit(
            &mut out,
            EventKind::RunMeta,
            json!({"event": "inject", "path": path, "value": value, "start_t": self.t, "end_t": end_t}),
        );
        Ok(out)
    }

    /// Executes timestep `t` and advances to `t + 1`.
    pub fn step(&mut self) -> Result<StepOutput> {
        if self.is_finished() {
            return Err(Error::Config(format!("run already reached horizon {}", self.scenario.horizon_t)));
        }
        let t = self.t;
        let mut events = Vec::new();
        self.ensure_started(&mut events);
        let eff = self.scenario.effective_at(t)?;
        let p = &eff.pipeline;
        let k = p.k_reviewers;

        // Arrivals.
        let mut wcfg = eff.world.clone();
        wcfg.quality_mu += eff.stress.quality_drift;
        let p_sub = (eff.world.p_sub * eff.stress.arrival_multiplier).clamp(0.0, 1.0);
        let arrivals = self
            .world
            .generate_arrivals(&wcfg, &mut self.streams.arrivals, t, Some(p_sub))?;
        self.counters.arrivals += arrivals.len() as u64;
        let resubmissions = self.in_revision.len();
        self.backlog.append(&mut self.in_revision);
        self.backlog.extend(arrivals.iter().cloned());
        let backlog_before = self.backlog.len();

        // Triage: clear rejects leave at once; repeat failures are desk-rejected.
        let capacity = p.manuscript_capacity(self.policy.rho_ai);
        let mut scored = Vec::with_capacity(self.backlog.len());
        let mut desk_rejected = 0usize;
        for m in std::mem::take(&mut self.backlog) {
            let key = [m.id, u64::from(m.revision_count), u64::from(m.deferrals)];
            let s = m.quality + RngStream::keyed(self.scenario.seed, "pipeline.triage", &key).normal(0.0, p.triage_noise)?;
            if s < p.desk_reject_th {
                desk_rejected += 1;
            } else {
                scored.push((m, s));
            }
        }
        let tri = triage_scored(scored, self.policy.tau, capacity);
        let below_threshold = tri.below_threshold;
        for m in tri.deferred {
            if m.deferrals >= p.max_deferrals {
                desk_rejected += 1;
            } else {
                self.backlog.push(m);
            }
        }
        self.counters.desk_rejected += desk_rejected as u64;
        let selected_n = tri.selected.len();
        self.emit(
            &mut events,
            EventKind::TriageSummary,
            json!({
                "arrivals": arrivals.len(),
                "resubmissions": resubmissions,
                "backlog_before": backlog_before,
                "selected": selected_n,
                "deferred": self.backlog.len(),
                "below_threshold": below_threshold,
                "desk_rejected": desk_rejected,
                "capacity": capacity,
                "tau": self.policy.tau,
            }),
        );

        // Collusion steering for this step.
        let collusion_active = eff.stress.collusion_active;
        if let Some(adv) = self.adversary.as_mut() {
            adv.step_share(collusion_active, &mut self.streams.adversary)?;
        }

        // Review.
        let budget = p.max_reviews_per_timestep as f64;
        let mut used = 0.0;
        let mut assigned_all: Vec<ReviewerId> = Vec::new();
        let mut disagreements = Vec::new();
        let mut fallback_ids: Vec<u64> = Vec::new();
        let (mut relaxed_n, mut short_n, mut empty_n) = (0usize, 0usize, 0usize);
        let (mut n_acc, mut n_rej, mut n_rev, mut n_exh) = (0usize, 0usize, 0usize, 0usize);
        let mut returned = 0usize;
        let mut escalations = 0usize;
        for mut m in tri.selected {
            if used >= budget {
                m.state = ManuscriptState::Backlog;
                self.backlog.push(m);
                returned += 1;
                continue;
            }
            let mut meta = None;
            loop {
                let round = m.rounds_used + 1;
                let bias = self
                    .adversary
                    .as_ref()
                    .and_then(|a| a.bias_assignment(&m, collusion_active));
                let a = assign_reviewers(
                    &m,
                    &mut self.world.reviewers,
                    self.policy.rho_ai,
                    k,
                    p.sim_threshold,
                    eff.world.max_load,
                    bias,
                    &mut self.streams.assignment,
                );
                if a.relaxed_similarity || a.reviewers.len() < k {
                    fallback_ids.push(m.id);
                    relaxed_n += a.relaxed_similarity as usize;
                    short_n += (a.reviewers.len() < k) as usize;
                    empty_n += a.reviewers.is_empty() as usize;
                }
                if let Some(adv) = self.adversary.as_mut() {
                    adv.record_assignment(&m, &a.reviewers);
                }
                if a.reviewers.is_empty() {
                    // Nobody available: an escalation keeps the earlier evidence,
                    // a first round sends the manuscript back to the backlog.
                    if !m.reviews.is_empty() {
                        meta = Some(aggregate_meta(&m, k)?);
                    }
                    break;
                }
                for id in &a.reviewers {
                    let r = &self.world.reviewers[*id as usize];
                    if r.researcher.is_some_and(|x| m.is_authored_by(x)) {
                        return Err(Error::Consistency(format!("reviewer {id} assigned to own manuscript {}", m.id)));
                    }
                    let rev = generate_review(&m, r, eff.stress.noise_multiplier, round, p, &mut self.streams.review)?;
                    used += rev.time_cost;
                    m.reviews.push(rev);
                }
                assigned_all.extend_from_slice(&a.reviewers);
                m.rounds_used = round;
                let mm = aggregate_meta(&m, k)?;
                if m.rounds_used > p.max_rounds {
                    return Err(Error::Consistency(format!("manuscript {} exceeded max_rounds", m.id)));
                }
                if used < budget && maybe_escalate(&mm, &self.policy, p) {
                    escalations += 1;
                    let payload = json!({
                        "manuscript_id": m.id,
                        "round": round + 1,
                        "disagreement": mm.disagreement,
                        "completeness": mm.completeness,
                    });
                    self.emit(&mut events, EventKind::Escalation, payload);
                    continue;
                }
                meta = Some(mm);
                break;
            }
            let Some(meta) = meta else {
                // No reviewer could be assigned at all: back to the backlog.
                m.state = ManuscriptState::Backlog;
                m.rounds_used = 0;
                self.backlog.push(m);
                returned += 1;
                continue;
            };
            disagreements.push(meta.disagreement);
            let decision = decide(&meta, p);
            let reviews: Vec<(ReviewerId, f64)> = m.reviews.iter().map(|r| (r.reviewer_id, r.score)).collect();
            match apply_decision(&mut m, decision, p) {
                Outcome::Accepted => {
                    n_acc += 1;
                    self.postpub.publish(Publication {
                        manuscript_id: m.id,
                        quality: m.quality,
                        accepted_t: t,
                        authors: m.authors.clone(),
                        reviews,
                        impact: Vec::new(),
                    });
                }
                Outcome::Rejected => n_rej += 1,
                Outcome::ReviseExhausted => n_exh += 1,
                Outcome::Revised => {
                    n_rev += 1;
                    self.in_revision.push(m);
                }
            }
        }
        if !fallback_ids.is_empty() {
            self.emit(
                &mut events,
                EventKind::AssignmentFallback,
                json!({
                    "relaxed_similarity": relaxed_n,
                    "short": short_n,
                    "empty": empty_n,
                    "manuscript_ids": fallback_ids,
                }),
            );
        }
        self.counters.accepted += n_acc as u64;
        self.counters.rejected += n_rej as u64;
        self.counters.revise_exhausted += n_exh as u64;
        self.counters.revisions += n_rev as u64;
        self.counters.escalations += escalations as u64;
        self.counters.max_escalations_per_step = self.counters.max_escalations_per_step.max(escalations as u64);
        let processed = disagreements.len();
        self.emit(
            &mut events,
            EventKind::DecisionBatchSummary,
            json!({
                "processed": processed,
                "accepted": n_acc,
                "rejected": n_rej,
                "revised": n_rev,
                "revise_exhausted": n_exh,
                "returned_unprocessed": returned,
                "escalations": escalations,
                "budget_used": used,
                "budget": budget,
            }),
        );

        // Collusion measurement and detection.
        let mut concentration = 0.0;
        let mut within_share = 0.0;
        let mut intervention_active = false;
        if let Some(adv) = self.adversary.as_mut() {
            within_share = adv.measure();
            concentration = adv.update_kappa(within_share);
            let fired = adv.check_detection(t);
            intervention_active = adv.intervention_active;
            let state = json!({
                "steering_share": adv.share,
                "within_cluster_share": within_share,
                "kappa": concentration,
                "consecutive_above": adv.consecutive_above,
                "intervention_active": adv.intervention_active,
            });
            self.emit(&mut events, EventKind::CollusionState, state);
            if let Some(ev) = fired {
                self.emit(&mut events, EventKind::Intervention, serde_json::to_value(ev)?);
            }
        }
        self.max_concentration = self.max_concentration.max(concentration);

        // Post-publication credit; never touches decisions already taken.
        let pass = self
            .postpub
            .step(t, &eff.postpub, p.accept_midpoint(), &mut self.streams.postpub)?;

        // Signals and the policy update for the next timestep.
        let snapshot = collect_signals(SignalInputs {
            t,
            backlog: self.backlog.len(),
            disagreements: &disagreements,
            reviewers: &self.world.reviewers,
            concentration,
            escalations,
            capacity,
            impact_gap: pass.impact_gap,
        });
        let history: Vec<SignalSnapshot> = self.history.iter().cloned().collect();
        let (next, changes) = update_policy(&self.policy, &snapshot, &eff.governance, &history);
        for c in &changes {
            self.emit(&mut events, EventKind::PolicyUpdate, policy_payload(c));
        }
        self.counters.policy_changes += changes.len() as u64;
        self.policy = next;
        self.history.push_back(snapshot.clone());
        while self.history.len() > self.history_cap {
            self.history.pop_front();
        }

        let row = MetricsRow {
            t,
            backlog: snapshot.backlog,
            processed,
            mean_disagreement: snapshot.mean_disagreement,
            mean_load: snapshot.mean_load,
            max_load: snapshot.max_load_observed,
            rho_ai: self.policy.rho_ai,
            tau: self.policy.tau,
            escalation_enabled: self.policy.escalation_enabled,
            escalations,
            accepted: n_acc,
            rejected: n_rej + n_exh + desk_rejected,
            revised: n_rev,
            concentration,
            within_cluster_share: within_share,
            intervention_active,
            mean_author_credit: self.postpub.ledger.mean_author_credit(),
            mean_reviewer_credit: self.postpub.ledger.mean_reviewer_credit(),
            cumulative_impact: self.postpub.cumulative_impact,
            objective_u: objective(&snapshot, &eff.governance.objective_weights),
        };

        if !workloads_within_cap(&self.world.reviewers, &eff.world) {
            return Err(Error::Consistency(format!("reviewer workload above max_load at t={t}")));
        }
        release_workloads(&assigned_all, &mut self.world.reviewers)?;
        self.last_snapshot = Some(snapshot.clone());
        self.t += 1;
        self.check_invariants()?;
        Ok(StepOutput { snapshot, row, events })
    }

    /// Conservation, workload and policy-bound checks at a step boundary.
    pub fn check_invariants(&self) -> Result<()> {
        let c = &self.counters;
        let terminal = c.accepted + c.rejected + c.desk_rejected + c.revise_exhausted;
        let open = (self.backlog.len() + self.in_revision.len()) as u64;
        if c.arrivals != terminal + open {
            return Err(Error::Consistency(format!(
                "conservation: {} arrivals vs {} terminal + {} open",
                c.arrivals, terminal, open
            )));
        }
        if c.arrivals != self.world.manuscripts_created() {
            return Err(Error::Consistency("arrival counter disagrees with the world".into()));
        }
        if let Some(r) = self.world.reviewers.iter().find(|r| r.workload != 0) {
            return Err(Error::Consistency(format!("reviewer {} holds workload across steps", r.id)));
        }
        if !self.policy.within_bounds(&self.scenario.governance) {
            return Err(Error::Consistency(format!("policy out of bounds: {:?}", self.policy)));
        }
        if self.backlog.iter().chain(&self.in_revision).any(|m| m.state != ManuscriptState::Backlog) {
            return Err(Error::Consistency("non-backlog manuscript in the backlog".into()));
        }
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        let adv = self.adversary.as_ref();
        Summary {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            horizon_t: self.scenario.horizon_t,
            steps_completed: self.t,
            final_backlog: self.backlog.len(),
            in_revision_final: self.in_revision.len(),
            rho_ai_final: self.policy.rho_ai,
            tau_final: self.policy.tau,
            escalation_enabled_final: self.policy.escalation_enabled,
            total_escalations: self.counters.escalations,
            max_escalations_per_step: self.counters.max_escalations_per_step,
            arrivals: self.counters.arrivals,
            accepted: self.counters.accepted,
            rejected: self.counters.rejected,
            desk_rejected: self.counters.desk_rejected,
            revise_exhausted: self.counters.revise_exhausted,
            revisions: self.counters.revisions,
            policy_changes: self.counters.policy_changes,
            first_intervention_t: adv.and_then(|a| a.first_intervention_t),
            max_concentration: self.max_concentration,
            final_concentration: adv.map_or(0.0, |a| a.kappa),
            cumulative_impact: self.postpub.cumulative_impact,
            mean_author_credit_final: self.postpub.ledger.mean_author_credit(),
            mean_reviewer_credit_final: self.postpub.ledger.mean_reviewer_credit(),
            events: self.chain.len(),
            chain_head: self.chain.head().to_string(),
            config_hash: self.scenario.config_hash(),
        }
    }
}

fn policy_payload(c: &PolicyChange) -> Value {
    json!({ "field": c.field, "old": c.old, "new": c.new, "trigger": c.trigger })
}

/// Everything a run produced, held in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub events: Vec<AuditEvent>,
    pub summary: Summary,
}

/// Runs a scenario to its horizon without touching disk.
pub fn run_in_memory(scenario: ScenarioConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(scenario)?;
    let mut rows = Vec::with_capacity(sim.scenario.horizon_t as usize);
    let mut events = Vec::new();
    while !sim.is_finished() {
        let out = sim.step()?;
        rows.push(out.row);
        events.extend(out.events);
    }
    Ok(RunOutput {
        rows,
        events,
        summary: sim.summary(),
    })
}

/// Creates `<root>/<scenario>-<seed>-<timestamp>/`, unique even within one second.
pub fn create_run_dir(root: &Path, scenario: &ScenarioConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = format!("{}-{}-{}", scenario.name, scenario.seed, stamp);
    let mut dir = root.join(&base);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = root.join(format!("{base}-{n}"));
                n += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Runs a scenario, writing `config.resolved`, `metrics.csv`, `events.jsonl`
/// and `summary.json` into a fresh run directory under `out_root`. Events and
/// metrics are flushed after every step, so a failed run leaves a valid prefix.
pub fn run(scenario: ScenarioConfig, out_root: &Path) -> Result<PathBuf> {
    let mut sim = Simulation::new(scenario)?;
    let dir = create_run_dir(out_root, &sim.scenario)?;
    write_run(&mut sim, &dir)?;
    Ok(dir)
}

/// Drives `sim` to its horizon, writing artifacts into the existing `dir`.
pub fn write_run(sim: &mut Simulation, dir: &Path) -> Result<Summary> {
    std::fs::write(dir.join("config.resolved"), serde_yaml::to_string(&sim.scenario)?)?;
    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut log = EventWriter::create(&dir.join("events.jsonl"))?;
    metrics.flush()?;
    while !sim.is_finished() {
        let out = sim.step()?;
        for ev in &out.events {
            log.write(ev)?;
        }
        log.flush()?;
        metrics.write_row(&out.row)?;
        metrics.flush()?;
    }
    let summary = sim.summary();
    summary.write(&dir.join("summary.json"))?;
    Ok(summary)
}
