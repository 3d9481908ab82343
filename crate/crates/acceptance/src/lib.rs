//! Support code for the acceptance suite: one-line verdict reporting, the
//! bundled scenario directory, and a generator of random valid configurations
//! for invariant fuzzing.

use std::io::Write;
use std::path::PathBuf;

use govsim_core::config::StressWindow;
use govsim_core::ScenarioConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Directory holding the bundled scenario files.
pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenarios_dir().join(name)
}

/// Prints one verdict line and returns `pass`.
///
/// The line goes straight to the process's stderr handle, past the test
/// harness's output capture, so every verdict shows up in the test log.
pub fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) -> bool {
    let mark = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2} {mark}  {title}: {detail}\n");
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    pass
}

/// A random configuration that passes validation, with the given horizon.
///
/// World sizes are kept small so that thousands of runs stay cheap; every
/// other knob ranges over its valid domain, including stress windows and the
/// adversary regime.
pub fn random_config(seed: u64, horizon: u32) -> ScenarioConfig {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut c = ScenarioConfig {
        name: format!("fuzz-{seed}"),
        seed: r.random(),
        horizon_t: horizon,
        ..ScenarioConfig::default()
    };

    let w = &mut c.world;
    w.n_authors = r.random_range(2..400);
    w.n_human_reviewers = r.random_range(1..120);
    w.n_ai_reviewers = r.random_range(0..30);
    w.keyword_universe_size = r.random_range(1..60);
    w.keywords_per_researcher = r.random_range(1..=w.keyword_universe_size.min(6));
    w.p_sub = r.random_range(0.0..0.12);
    w.quality_mu = r.random_range(0.1..0.95);
    w.quality_sigma = r.random_range(0.0..0.4);
    w.complexity_mu = r.random_range(0.0..1.0);
    w.complexity_sigma = r.random_range(0.0..0.4);
    w.max_load = r.random_range(1..9);
    w.human_reliability_min = r.random_range(0.3..1.2);
    w.human_reliability_max = w.human_reliability_min + r.random_range(0.0..0.8);

    let p = &mut c.pipeline;
    p.k_reviewers = r.random_range(1..6);
    p.sim_threshold = r.random_range(0.0..0.6);
    p.max_reviews_per_timestep = r.random_range(1..300);
    p.accept_th = r.random_range(0.4..0.95);
    p.reject_th = r.random_range(0.05..p.accept_th);
    p.disc_th = r.random_range(0.0..1.5);
    p.comp_th = r.random_range(0.0..1.0);
    p.max_rounds = r.random_range(1..5);
    p.noise_base = r.random_range(0.0..0.3);
    p.noise_complexity_gain = r.random_range(0.0..0.2);
    p.ai_noise_multiplier = r.random_range(0.2..3.0);
    p.time_mu = r.random_range(-1.5..0.5);
    p.time_sigma = r.random_range(0.05..1.0);
    p.ai_time_multiplier = r.random_range(0.05..1.5);
    p.max_revisions = r.random_range(0..4);
    p.revise_quality_bump = r.random_range(0.0..0.2);
    p.triage_noise = r.random_range(0.0..0.3);
    p.max_deferrals = r.random_range(1..5);
    p.desk_reject_th = r.random_range(0.0..0.6);

    let g = &mut c.governance;
    g.backlog_low = r.random_range(0..40);
    g.backlog_high = g.backlog_low + r.random_range(1..80);
    g.ai_min = r.random_range(0.0..0.5);
    g.ai_max = r.random_range(g.ai_min..=1.0);
    g.ai_step = r.random_range(0.001..0.3);
    g.triage_step = r.random_range(0.001..0.3);
    g.tau_max = r.random_range(0.1..1.0);
    g.triage_th0 = r.random_range(0.0..=g.tau_max);
    g.disagreement_high = r.random_range(0.0..1.0);
    g.hysteresis_steps = r.random_range(1..6);
    g.eta = r.random_range(0.0..2.0);
    g.ai_fraction_initial = r.random_range(g.ai_min..=g.ai_max);
    g.escalation_initial = r.random();
    g.impact_feedback = r.random();

    let pool = c.world.n_human_reviewers.min(c.world.n_authors);
    let collusion = r.random_bool(0.3) && pool >= 2;
    let a = &mut c.adversary;
    a.enabled = collusion;
    a.alpha = r.random_range(0.0..=1.0);
    a.detect_threshold = r.random_range(0.0..1.0);
    a.patience = r.random_range(0..6);
    a.mitigation_strength = r.random_range(0.0..=1.0);
    a.share_growth = r.random_range(0.0..0.1);
    a.share_growth_noise = r.random_range(0.0..0.3);
    a.share_cap = r.random_range(0.0..=1.0);
    a.window = r.random_range(1..10);
    a.disable_capture_mitigation = r.random();
    if collusion {
        a.cluster_size = r.random_range(2..=pool.min(20));
        a.affiliated_authors = r.random_range(0..=c.world.n_authors);
    }

    let pp = &mut c.postpub;
    pp.xi = r.random_range(0.1..8.0);
    pp.q0 = r.random_range(0.0..1.0);
    pp.horizon = r.random_range(1..30);
    pp.smoothing_window = r.random_range(1..6);
    pp.alpha_a = r.random_range(0.001..0.5);
    pp.alpha_r = r.random_range(0.001..0.5);
    pp.c_bar = r.random_range(0.0..5.0);

    c.stress.arrival_multiplier = r.random_range(0.0..2.0);
    c.stress.noise_multiplier = r.random_range(0.2..3.0);
    c.stress.collusion_active = collusion && r.random_bool(0.8);

    if horizon >= 2 {
        for _ in 0..r.random_range(0..3) {
            let start = r.random_range(0..horizon - 1);
            let end = r.random_range(start + 1..=horizon);
            let (path, value) = match r.random_range(0..4) {
                0 => ("stress.arrival_multiplier", json!(r.random_range(0.0..3.0))),
                1 => ("stress.noise_multiplier", json!(r.random_range(0.2..4.0))),
                2 => ("stress.quality_drift", json!(r.random_range(-0.3..0.3))),
                _ => ("stress.collusion_active", json!(collusion && r.random())),
            };
            c.windows.push(StressWindow {
                start_t: start,
                end_t: end,
                path: path.into(),
                value,
            });
        }
    }
    c
}
