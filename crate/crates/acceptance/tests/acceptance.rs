//! Acceptance criteria 1–11. Each test prints one `criterion N PASS|FAIL`
//! line with the measured values, then asserts the verdict.
//!
//! Runs are written under the cargo target directory and memoized, so the
//! audit criterion re-verifies exactly the runs the other criteria produced.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use govsim_acceptance::{random_config, scenario_path, verdict};
use govsim_cli::{cmd_batch, cmd_run, cmd_sweep, ScenarioArgs};
use govsim_core::adversary::CollusionState;
use govsim_core::audit::{canonical_json, read_events, sha256_hex, verify_bytes, verify_chain, AuditEvent, ChainStatus, EventKind};
use govsim_core::config::{AdversaryConfig, ObjectiveWeights, PipelineConfig, PostpubConfig};
use govsim_core::governance::{objective, SignalSnapshot};
use govsim_core::metrics::{read_metrics, MetricsRow, MetricsWriter};
use govsim_core::pipeline::{decide, Decision, MetaReview};
use govsim_core::postpub::{expected_impact, impact_increment, CreditLedger};
use govsim_core::rng::RngStream;
use govsim_core::world::jaccard;
use govsim_core::{load_scenario, run_in_memory, ScenarioConfig, Simulation, Summary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
const EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Shared, memoized runs
// ---------------------------------------------------------------------------

/// A set of written runs and the wall time it took to produce them.
struct Batch {
    runs: Vec<(PathBuf, Summary)>,
    elapsed: Duration,
}

fn out_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs");
        let _ = std::fs::remove_dir_all(&root);
        std::fs::create_dir_all(&root).unwrap();
        root
    })
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Computes `make` once per key, even when tests race for it.
fn memo(key: &str, make: impl FnOnce(&Path) -> Batch) -> Arc<Batch> {
    static CELLS: OnceLock<Mutex<HashMap<String, Arc<OnceLock<Arc<Batch>>>>>> = OnceLock::new();
    let cell = CELLS
        .get_or_init(Default::default)
        .lock()
        .unwrap()
        .entry(key.to_string())
        .or_default()
        .clone();
    cell.get_or_init(|| {
        let dir = out_root().join(key);
        std::fs::create_dir_all(&dir).unwrap();
        Arc::new(make(&dir))
    })
    .clone()
}

fn args(scenario: &str, overrides: &[&str]) -> ScenarioArgs {
    overrides
        .iter()
        .fold(ScenarioArgs::new(scenario_path(scenario)), |a, o| a.with_override(o))
}

fn batch(key: &str, scenario: &str, overrides: &[&str], seeds: &[u64]) -> Arc<Batch> {
    memo(key, |dir| {
        let start = Instant::now();
        let runs = cmd_batch(&args(scenario, overrides), seeds, dir, jobs()).unwrap();
        Batch { runs, elapsed: start.elapsed() }
    })
}

fn rows(dir: &Path) -> Vec<MetricsRow> {
    read_metrics(&dir.join("metrics.csv")).unwrap()
}

fn events(dir: &Path) -> Vec<AuditEvent> {
    read_events(&dir.join("events.jsonl")).unwrap()
}

fn config(scenario: &str) -> ScenarioConfig {
    load_scenario(&scenario_path(scenario), &[]).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS
}

// Criterion 1: two invocations of the same baseline run.
fn c1_runs() -> Arc<Batch> {
    memo("c1-determinism", |dir| {
        let a = args("baseline.yaml", &[]).with_seed(123);
        let mut runs = Vec::new();
        let mut slowest = Duration::ZERO;
        for sub in ["first", "second"] {
            let start = Instant::now();
            let run = cmd_run(&a, &dir.join(sub)).unwrap();
            slowest = slowest.max(start.elapsed());
            let s = Summary::read(&run.join("summary.json")).unwrap();
            runs.push((run, s));
        }
        Batch { runs, elapsed: slowest }
    })
}

fn c3_runs() -> Arc<Batch> {
    batch("c3-baseline", "baseline.yaml", &[], &SEEDS)
}

fn c4_runs() -> Arc<Batch> {
    batch("c4-surge", "surge.yaml", &[], &SEEDS)
}

fn c5_runs() -> Arc<Batch> {
    batch("c5-spike", "disagreement_spike.yaml", &["governance.triage_step=0.03"], &SEEDS)
}

const SWEEP_STEPS: [&str; 3] = ["0.01", "0.03", "0.10"];

/// Sweep runs in value-major order: index `v * SEEDS.len() + s`.
fn c6_runs() -> Arc<Batch> {
    memo("c6-sweep", |dir| {
        let start = Instant::now();
        let values: Vec<String> = SWEEP_STEPS.iter().map(|s| s.to_string()).collect();
        let sw = cmd_sweep(
            &args("disagreement_spike.yaml", &[]),
            "governance.triage_step",
            &values,
            &SEEDS,
            dir,
            jobs(),
        )
        .unwrap();
        let runs = sw
            .rows
            .iter()
            .map(|r| (r.run_dir.clone(), Summary::read(&r.run_dir.join("summary.json")).unwrap()))
            .collect();
        Batch { runs, elapsed: start.elapsed() }
    })
}

fn c7_runs() -> (Arc<Batch>, Arc<Batch>) {
    (
        batch("c7-collusion", "collusion.yaml", &[], &SEEDS),
        batch("c7-collusion-off", "collusion_no_mitigation.yaml", &[], &SEEDS),
    )
}

const C8_SEEDS: [u64; 3] = [1, 2, 3];

/// The post-publication scenario under two sets of credit rates.
fn c8_runs() -> (Arc<Batch>, Arc<Batch>) {
    (
        batch("c8-postpub", "postpub_learning.yaml", &[], &C8_SEEDS),
        batch(
            "c8-postpub-rates",
            "postpub_learning.yaml",
            &["postpub.alpha_a=0.35", "postpub.alpha_r=0.2"],
            &C8_SEEDS,
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_determinism() {
    let b = c1_runs();
    let (a, c) = (&b.runs[0], &b.runs[1]);
    let csv_a = std::fs::read(a.0.join("metrics.csv")).unwrap();
    let csv_c = std::fs::read(c.0.join("metrics.csv")).unwrap();
    let head = |dir: &Path| match verify_chain(&dir.join("events.jsonl")).unwrap() {
        ChainStatus::Ok { head, .. } => head,
        other => panic!("{other:?}"),
    };
    let same_csv = csv_a == csv_c;
    let same_head = head(&a.0) == head(&c.0) && a.1.chain_head == c.1.chain_head;
    let fast = b.elapsed < Duration::from_secs(10);
    let pass = verdict(
        1,
        "determinism",
        same_csv && same_head && fast,
        &format!(
            "metrics.csv identical={same_csv} ({} bytes), chain head identical={same_head}, slowest baseline run {:.2}s (< 10s)",
            csv_a.len(),
            b.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_unit_oracles() {
    fn rel_ok(got: f64, want: f64) -> bool {
        (got - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE)
    }
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let adv = AdversaryConfig { alpha: 0.2, ..AdversaryConfig::default() };
    let mut k = CollusionState::new(&adv, vec![], BTreeSet::new());
    check("update_kappa(0, 0.2, 0.3) = 0.06", rel_ok(k.update_kappa(0.3), 0.06));
    let mut k1 = CollusionState::new(&AdversaryConfig { alpha: 1.0, ..adv.clone() }, vec![], BTreeSet::new());
    k1.kappa = 0.4;
    check("update_kappa alpha=1", rel_ok(k1.update_kappa(0.17), 0.17));
    let mut k0 = CollusionState::new(&AdversaryConfig { alpha: 0.0, ..adv }, vec![], BTreeSet::new());
    k0.kappa = 0.4;
    check("update_kappa alpha=0", rel_ok(k0.update_kappa(0.9), 0.4));

    let mut ledger = CreditLedger::new(&PostpubConfig { alpha_a: 0.1, c_bar: 3.0, ..PostpubConfig::default() });
    ledger.author_credit.insert(7, 1.0);
    ledger.update_author_credit(&[7], 5.0).unwrap();
    check("update_author_credit -> 1.2", rel_ok(ledger.author_credit[&7], 1.2));
    ledger.update_author_credit(&[7], 3.0).unwrap();
    check("update_author_credit C = C_bar", rel_ok(ledger.author_credit[&7], 1.2));

    let cfg = PipelineConfig::default();
    let meta = |mean_score| MetaReview {
        manuscript_id: 0,
        disagreement: 0.0,
        completeness: 1.0,
        mean_score,
        n_reviews: 3,
        rounds_used: 1,
    };
    check("decide(0.75) = accept", decide(&meta(0.75), &cfg) == Decision::Accept);
    check("decide(0.35) = reject", decide(&meta(0.35), &cfg) == Decision::Reject);
    check("decide(0.55) = revise", decide(&meta(0.55), &cfg) == Decision::Revise);

    check("jaccard({1,2},{2,3}) = 1/3", rel_ok(jaccard(&[1, 2], &[2, 3]), 1.0 / 3.0));
    check("jaccard(a, a) = 1", rel_ok(jaccard(&[4, 9], &[4, 9]), 1.0));
    check("jaccard(disjoint) = 0", jaccard(&[1, 2], &[3, 4]) == 0.0);

    let unit = ObjectiveWeights { w_b: 1.0, w_d: 1.0, w_l: 1.0, w_c: 1.0, w_p: 1.0 };
    let snap = SignalSnapshot {
        t: 0,
        backlog: 10,
        mean_disagreement: 0.0,
        mean_load: 0.0,
        max_load_observed: 0,
        concentration: 0.0,
        processed: 0,
        escalations: 0,
        perf: 0.0,
        impact_gap: None,
    };
    check("objective(B=10, unit weights) = -10", rel_ok(objective(&snap, &unit), -10.0));
    let zero = SignalSnapshot { backlog: 0, ..snap };
    check("objective(0) = 0", objective(&zero, &unit) == 0.0);

    let pass = verdict(
        2,
        "unit oracles",
        failures.is_empty(),
        &if failures.is_empty() {
            "update_kappa, update_author_credit, decide, jaccard, objective match to 1e-12 relative".to_string()
        } else {
            format!("mismatches: {failures:?}")
        },
    );
    assert!(pass);
}

/// Timesteps whose policy vector differs from the one in force before them.
fn policy_change_steps(cfg: &ScenarioConfig, rows: &[MetricsRow]) -> usize {
    let g = &cfg.governance;
    let mut prev = (g.ai_fraction_initial, g.triage_th0, g.escalation_initial);
    let mut n = 0;
    for r in rows {
        let cur = (r.rho_ai, r.tau, r.escalation_enabled);
        if !(close(cur.0, prev.0) && close(cur.1, prev.1) && cur.2 == prev.2) {
            n += 1;
        }
        prev = cur;
    }
    n
}

#[test]
fn criterion_03_baseline_inactivity() {
    let cfg = config("baseline.yaml");
    let b = c3_runs();
    let mut changes = 0;
    let mut steps = 0;
    let mut under = 0;
    let mut finals = Vec::new();
    for (dir, s) in &b.runs {
        let rows = rows(dir);
        changes += policy_change_steps(&cfg, &rows);
        steps += rows.len();
        finals.push(s.final_backlog);
        if s.final_backlog < cfg.governance.backlog_high {
            under += 1;
        }
    }
    let frac = changes as f64 / steps as f64;
    let pass = verdict(
        3,
        "baseline inactivity",
        frac < 0.05 && under >= 8,
        &format!(
            "policy changed on {changes}/{steps} steps ({:.2}% < 5%); final backlog < {} in {under}/10 seeds {finals:?}",
            100.0 * frac,
            cfg.governance.backlog_high
        ),
    );
    assert!(pass);
}

/// Trailing 10-step moving average; entry `i` covers steps `i-9..=i`.
fn moving_average(xs: &[f64], w: usize) -> Vec<Option<f64>> {
    (0..xs.len())
        .map(|i| (i + 1 >= w).then(|| xs[i + 1 - w..=i].iter().sum::<f64>() / w as f64))
        .collect()
}

/// From the post-window peak of the moving average, the average never rises
/// again until it is back at or below `floor`.
fn recovers_monotonically(backlog: &[f64], window_end: usize, floor: f64) -> Result<(), String> {
    let ma = moving_average(backlog, 10);
    let post: Vec<(usize, f64)> = (window_end..ma.len()).filter_map(|t| ma[t].map(|v| (t, v))).collect();
    let Some(&(peak_t, _)) = post.iter().fold(None, |best: Option<&(usize, f64)>, x| match best {
        Some(b) if b.1 >= x.1 => Some(b),
        _ => Some(x),
    }) else {
        return Err("no post-window averages".into());
    };
    for w in post.windows(2).filter(|w| w[0].0 >= peak_t) {
        if w[0].1 <= floor {
            return Ok(());
        }
        if w[1].1 > w[0].1 + EPS {
            return Err(format!("moving average rises at t={} ({:.1} -> {:.1})", w[1].0, w[0].1, w[1].1));
        }
    }
    Ok(())
}

#[test]
fn criterion_04_surge_recovery() {
    let cfg = config("surge.yaml");
    let g = &cfg.governance;
    let window_end = cfg.windows[0].end_t as usize;
    let b = c4_runs();
    let mut mono_fail = Vec::new();
    let mut relax_fail = Vec::new();
    let mut recovered = 0;
    let mut finals = Vec::new();
    for (dir, s) in &b.runs {
        let backlog: Vec<f64> = rows(dir).iter().map(|r| r.backlog as f64).collect();
        if let Err(e) = recovers_monotonically(&backlog, window_end, g.backlog_low as f64) {
            mono_fail.push(format!("seed {}: {e}", s.seed));
        }
        finals.push(s.final_backlog);
        if s.final_backlog <= 5 {
            recovered += 1;
        }
        let rho_ok = (s.rho_ai_final - g.ai_fraction_initial).abs() <= g.ai_step + EPS;
        let tau_ok = (s.tau_final - g.triage_th0).abs() <= g.triage_step + EPS;
        if !(rho_ok && tau_ok) {
            relax_fail.push(format!("seed {} rho {} tau {}", s.seed, s.rho_ai_final, s.tau_final));
        }
    }
    let pass = verdict(
        4,
        "surge recovery",
        mono_fail.is_empty() && recovered >= 8 && relax_fail.is_empty(),
        &format!(
            "10-step moving average monotone after its post-window peak in {}/10 seeds {mono_fail:?}; \
             final backlog <= 5 in {recovered}/10 {finals:?}; policy within one step of initial in {}/10 {relax_fail:?}",
            10 - mono_fail.len(),
            10 - relax_fail.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_spike_saturation() {
    let cfg = config("disagreement_spike.yaml");
    let win = cfg.windows[0].clone();
    let tau_max = cfg.governance.tau_max;
    let b = c5_runs();
    let mut saturated = 0;
    let mut totals = Vec::new();
    let mut problems = Vec::new();
    for (dir, s) in &b.runs {
        if close(s.tau_final, tau_max) {
            saturated += 1;
        }
        let esc: Vec<u32> = events(dir)
            .iter()
            .filter(|e| e.kind == EventKind::Escalation)
            .map(|e| e.t)
            .collect();
        totals.push(esc.len());
        if esc.is_empty() || !(3..=25).contains(&esc.len()) {
            problems.push(format!("seed {}: {} escalations", s.seed, esc.len()));
        }
        if let Some(t) = esc.iter().find(|&&t| !win.contains(t)) {
            problems.push(format!("seed {}: escalation at t={t} outside [{}, {})", s.seed, win.start_t, win.end_t));
        }
    }
    let pass = verdict(
        5,
        "spike saturation",
        saturated >= 9 && problems.is_empty(),
        &format!(
            "tau(T) = {tau_max} in {saturated}/10 seeds; escalations per seed {totals:?} (all in [3, 25], inside [{}, {})) {problems:?}",
            win.start_t, win.end_t
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_triage_step_sweep() {
    let tau_max = config("disagreement_spike.yaml").governance.tau_max;
    let b = c6_runs();
    let n = SEEDS.len();
    let at = |v: usize, s: usize| &b.runs[v * n + s].1;
    let mut problems = Vec::new();
    let mut pairs = Vec::new();
    for s in 0..n {
        let (small, mid, large) = (at(0, s), at(1, s), at(2, s));
        pairs.push(format!("{}:{}", small.final_backlog, mid.final_backlog));
        if !(small.tau_final < tau_max - EPS) {
            problems.push(format!("seed {}: step 0.01 tau(T) {}", SEEDS[s], small.tau_final));
        }
        if !(small.final_backlog < mid.final_backlog) {
            problems.push(format!(
                "seed {}: backlog {} (0.01) not below {} (0.03)",
                SEEDS[s], small.final_backlog, mid.final_backlog
            ));
        }
        for big in [mid, large] {
            if !close(big.tau_final, tau_max) {
                problems.push(format!("seed {}: tau(T) {} below cap at a large step", SEEDS[s], big.tau_final));
            }
        }
    }
    let pass = verdict(
        6,
        "triage_step sweep",
        problems.is_empty(),
        &format!(
            "seeds 1-10 matched; step 0.01 tau(T) < {tau_max} and backlog below step 0.03 (0.01:0.03 = {}); \
             steps 0.03, 0.10 reach tau(T) = {tau_max} {problems:?}",
            pairs.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_collusion_ablation() {
    let (on, off) = c7_runs();
    let elapsed = on.elapsed + off.elapsed;
    let firsts: Vec<Option<u32>> = on.runs.iter().map(|(_, s)| s.first_intervention_t).collect();
    let timely = firsts.iter().all(|f| f.is_some_and(|t| (5..=25).contains(&t)));
    let k_on: Vec<f64> = on.runs.iter().map(|(_, s)| s.final_concentration).collect();
    let k_off: Vec<f64> = off.runs.iter().map(|(_, s)| s.final_concentration).collect();
    let paired = on
        .runs
        .iter()
        .zip(&off.runs)
        .filter(|((_, a), (_, b))| a.seed == b.seed && a.final_concentration < b.final_concentration)
        .count();
    let (m_on, m_off) = (median(k_on.clone()), median(k_off.clone()));
    let pass = verdict(
        7,
        "collusion ablation",
        timely && paired == 10 && m_on < 0.5 * m_off && elapsed < Duration::from_secs(120),
        &format!(
            "first intervention {:?} (all in [5, 25]); final kappa enabled < disabled in {paired}/10; \
             median {m_on:.4} vs {m_off:.4} (ratio {:.2} < 0.5); batch {:.1}s (< 120s)",
            firsts.iter().map(|f| f.map_or(-1, |t| t as i64)).collect::<Vec<_>>(),
            m_on / m_off,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Hash of every pipeline, policy and adversary event, without run metadata.
fn decision_log_hash(evs: &[AuditEvent]) -> String {
    let lines: String = evs
        .iter()
        .filter(|e| e.kind != EventKind::RunMeta)
        .map(|e| canonical_json(&json!({ "t": e.t, "kind": e.kind, "payload": e.payload })) + "\n")
        .collect();
    sha256_hex(lines.as_bytes())
}

/// Decision-time fields of every publication still accruing impact.
fn publication_records(sim: &Simulation) -> HashMap<u64, Value> {
    sim.postpub()
        .active
        .iter()
        .map(|p| (p.manuscript_id as u64, json!([p.quality, p.accepted_t, p.authors, p.reviews])))
        .collect()
}

#[test]
fn criterion_08_postpub_monotonicity() {
    // E[ΔC | q] by Monte Carlo.
    let cfg = PostpubConfig::default();
    let mut rng = RngStream::new(2024, "acceptance.impact");
    let means: Vec<f64> = [0.2, 0.5, 0.8]
        .iter()
        .map(|&q| {
            let n = 100_000;
            (0..n).map(|_| impact_increment(q, &cfg, &mut rng).unwrap() as f64).sum::<f64>() / n as f64
        })
        .collect();
    let increasing = means.windows(2).all(|w| w[0] < w[1]);
    let expected: Vec<f64> = [0.2, 0.5, 0.8].iter().map(|&q| expected_impact(q, &cfg)).collect();

    // Fifty consecutive below-average outcomes.
    let mut ledger = CreditLedger::new(&cfg);
    ledger.register_author(1);
    let mut r = ChaCha8Rng::seed_from_u64(50);
    let mut trace = vec![ledger.author_credit[&1]];
    for _ in 0..50 {
        let c = cfg.c_bar * r.random_range(0.0..1.0);
        ledger.update_author_credit(&[1], c).unwrap();
        trace.push(ledger.author_credit[&1]);
    }
    let decays = trace.windows(2).all(|w| w[1] < w[0]);

    // No retroaction, within a run: every step's credit pass leaves earlier
    // decisions and the log written so far untouched.
    let mut sim = Simulation::new(load_scenario(&scenario_path("postpub_learning.yaml"), &[]).unwrap()).unwrap();
    let mut log: Vec<AuditEvent> = Vec::new();
    let mut passes = 0;
    let mut retro = Vec::new();
    while !sim.is_finished() {
        let before_log = decision_log_hash(&log);
        let written = log.len();
        let before = publication_records(&sim);
        log.extend(sim.step().unwrap().events);
        let after = publication_records(&sim);
        if after.iter().any(|(id, rec)| before.get(id).is_some_and(|old| old != rec)) {
            retro.push(format!("publication decision records changed at t={}", sim.t()));
        }
        if decision_log_hash(&log[..written]) != before_log {
            retro.push(format!("decision log rewritten at t={}", sim.t()));
        }
        if !before.is_empty() {
            passes += 1;
        }
    }

    // No retroaction, across runs: different credit rates, same decision log.
    let (base, rates) = c8_runs();
    let mut identical = 0;
    for ((da, sa), (db, sb)) in base.runs.iter().zip(&rates.runs) {
        let same = decision_log_hash(&events(da)) == decision_log_hash(&events(db));
        let credit_differs = sa.mean_author_credit_final != sb.mean_author_credit_final;
        if same && credit_differs {
            identical += 1;
        } else {
            retro.push(format!("seed {}: decision log identical={same}, credit differs={credit_differs}", sa.seed));
        }
    }

    let pass = verdict(
        8,
        "post-publication monotonicity",
        increasing && decays && retro.is_empty(),
        &format!(
            "E[dC] at q=0.2,0.5,0.8: {:.4} {:.4} {:.4} (model {:.4} {:.4} {:.4}); author credit {:.2} -> {:.2} strictly \
             decreasing={decays}; decision log unchanged across {passes} credit passes and in {identical}/{} rate-varied runs {retro:?}",
            means[0], means[1], means[2], expected[0], expected[1], expected[2],
            trace[0], trace[50], C8_SEEDS.len()
        ),
    );
    assert!(pass);
}

/// Every run directory the other criteria wrote.
fn all_runs() -> Vec<(PathBuf, Summary)> {
    let (c7a, c7b) = c7_runs();
    let (c8a, c8b) = c8_runs();
    [c1_runs(), c3_runs(), c4_runs(), c5_runs(), c6_runs(), c7a, c7b, c8a, c8b]
        .iter()
        .flat_map(|b| b.runs.clone())
        .collect()
}

#[test]
fn criterion_09_audit_integrity() {
    let runs = all_runs();
    let mut problems = Vec::new();
    for (dir, s) in &runs {
        match verify_chain(&dir.join("events.jsonl")).unwrap() {
            ChainStatus::Ok { events, head } if events == s.events && head == s.chain_head => {}
            other => problems.push(format!("{}: {other:?}", dir.display())),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mutations = 300;
    let mut correct = 0;
    for _ in 0..mutations {
        let (dir, _) = &runs[rng.random_range(0..runs.len())];
        let mut bytes = std::fs::read(dir.join("events.jsonl")).unwrap();
        let at = rng.random_range(0..bytes.len());
        let old = bytes[at];
        let new = loop {
            let b: u8 = rng.random();
            if b != old {
                break b;
            }
        };
        bytes[at] = new;
        let expected = bytes[..at].iter().filter(|&&b| b == b'\n').count() as u64;
        match verify_bytes(&bytes) {
            ChainStatus::BrokenAt { seq } if seq == expected => correct += 1,
            other => problems.push(format!(
                "{} byte {at} {old:#04x}->{new:#04x}: expected seq {expected}, got {other:?}",
                dir.display()
            )),
        }
    }
    let pass = verdict(
        9,
        "audit integrity",
        problems.is_empty(),
        &format!(
            "{} runs verify with summary head; {correct}/{mutations} single-byte mutations report the right first broken seq {problems:?}",
            runs.len()
        ),
    );
    assert!(pass);
}

/// Checks one random short run; returns a description of the first violation.
fn fuzz_one(case: u64) -> Option<String> {
    let cfg = random_config(case, 50);
    let out = match run_in_memory(cfg.clone()) {
        Ok(o) => o,
        Err(e) => return Some(format!("case {case}: run aborted: {e}")),
    };
    let (g, w, p) = (&cfg.governance, &cfg.world, &cfg.pipeline);
    if out.rows.len() != 50 || out.rows.iter().enumerate().any(|(i, r)| r.t as usize != i) {
        return Some(format!("case {case}: metrics rows not contiguous"));
    }
    let mut writer = MetricsWriter::new(Vec::new()).ok()?;
    if out.rows.iter().any(|r| writer.write_row(r).is_err()) {
        return Some(format!("case {case}: metrics writer rejected the row sequence"));
    }
    for r in &out.rows {
        if r.max_load > w.max_load {
            return Some(format!("case {case}: load {} above cap {} at t={}", r.max_load, w.max_load, r.t));
        }
        if !(g.triage_th0 - EPS <= r.tau && r.tau <= g.tau_max + EPS && g.ai_min - EPS <= r.rho_ai && r.rho_ai <= g.ai_max + EPS) {
            return Some(format!("case {case}: policy ({}, {}) out of bounds at t={}", r.rho_ai, r.tau, r.t));
        }
    }
    for e in out.events.iter().filter(|e| e.kind == EventKind::Escalation) {
        let round = e.payload["round"].as_u64().unwrap_or(u64::MAX);
        if round > p.max_rounds as u64 {
            return Some(format!("case {case}: escalation to round {round} > {}", p.max_rounds));
        }
    }
    let s = &out.summary;
    let terminal = s.accepted + s.rejected + s.desk_rejected + s.revise_exhausted;
    if s.arrivals != terminal + s.final_backlog as u64 + s.in_revision_final as u64 {
        return Some(format!("case {case}: manuscripts not conserved"));
    }
    None
}

#[test]
fn criterion_10_invariant_fuzz() {
    let cases = 10_000u64;
    let start = Instant::now();
    let violations: Vec<String> = (0..cases).into_par_iter().filter_map(fuzz_one).collect();
    let pass = verdict(
        10,
        "invariant fuzz",
        violations.is_empty(),
        &format!(
            "{cases} random configs, T=50: {} violations in {:.0}s {:?}",
            violations.len(),
            start.elapsed().as_secs_f64(),
            violations.iter().take(5).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn create(app: &Router, scenario: &Path, seed: u64) -> String {
    let (s, b) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({ "scenario_path": scenario.to_str().unwrap(), "seed": seed })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&b).unwrap();
    v["session_id"].as_str().unwrap().to_string()
}

async fn advance_to_end(app: &Router, id: &str, chunk: u32) {
    loop {
        let (s, b) = call(app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "n_steps": chunk }))).await;
        assert_eq!(s, StatusCode::OK);
        let v: Value = serde_json::from_slice(&b).unwrap();
        if v["finished"] == true {
            return;
        }
    }
}

async fn metrics_csv(app: &Router, id: &str, since: u32) -> Vec<u8> {
    call(app, "GET", &format!("/sessions/{id}/metrics?since_t={since}&format=csv"), None).await.1
}

async fn summary_head(app: &Router, id: &str) -> String {
    let (_, b) = call(app, "GET", &format!("/sessions/{id}/summary"), None).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    v["chain_head"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn criterion_11_service_equivalence() {
    let cli = tokio::task::spawn_blocking(c1_runs).await.unwrap();
    let (cli_dir, cli_summary) = &cli.runs[0];
    let cli_csv = std::fs::read(cli_dir.join("metrics.csv")).unwrap();

    let app = govsim_service::router(govsim_service::AppState::new());
    let baseline = scenario_path("baseline.yaml");
    let id = create(&app, &baseline, 123).await;
    advance_to_end(&app, &id, 37).await;
    let svc_csv = metrics_csv(&app, &id, 0).await;
    let same_metrics = svc_csv == cli_csv;
    let same_head = summary_head(&app, &id).await == cli_summary.chain_head;

    let parent = create(&app, &baseline, 123).await;
    call(&app, "POST", &format!("/sessions/{parent}/advance"), Some(json!({ "n_steps": 80 }))).await;
    let (s, b) = call(&app, "POST", &format!("/sessions/{parent}/fork"), None).await;
    assert_eq!(s, StatusCode::CREATED);
    let fork: Value = serde_json::from_slice(&b).unwrap();
    let fork = fork["session_id"].as_str().unwrap().to_string();
    advance_to_end(&app, &parent, 50).await;
    advance_to_end(&app, &fork, 120).await;
    let fork_tail = metrics_csv(&app, &fork, 80).await;
    let parent_tail = metrics_csv(&app, &parent, 80).await;
    let fork_matches = fork_tail == parent_tail
        && metrics_csv(&app, &fork, 0).await == cli_csv
        && summary_head(&app, &fork).await == summary_head(&app, &parent).await;

    let pass = verdict(
        11,
        "service equivalence",
        same_metrics && same_head && fork_matches,
        &format!(
            "session metrics byte-identical to CLI run={same_metrics} ({} bytes), chain head identical={same_head}; \
             fork at t=80 replays parent's remaining {} rows exactly={fork_matches}",
            svc_csv.len(),
            String::from_utf8_lossy(&fork_tail).lines().count().saturating_sub(1)
        ),
    );
    assert!(pass);
}
