//! Scenario configuration: defaults, scenario files, dotted overrides and stress windows.
//!
//! Resolution order is defaults, then the scenario file, then command-line
//! overrides. Every key is checked against the default document so a typo is
//! a hard error rather than a silently ignored field.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_authors: usize,
    pub n_human_reviewers: usize,
    pub n_ai_reviewers: usize,
    pub keyword_universe_size: usize,
    pub keywords_per_researcher: usize,
    pub p_sub: f64,
    pub quality_mu: f64,
    pub quality_sigma: f64,
    pub complexity_mu: f64,
    pub complexity_sigma: f64,
    pub max_load: u32,
    /// Human reviewer noise multipliers are drawn uniformly from this range.
    pub human_reliability_min: f64,
    pub human_reliability_max: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_authors: 1000,
            n_human_reviewers: 200,
            n_ai_reviewers: 30,
            keyword_universe_size: 50,
            keywords_per_researcher: 4,
            p_sub: 0.03,
            quality_mu: 0.6,
            quality_sigma: 0.15,
            complexity_mu: 0.5,
            complexity_sigma: 0.2,
            max_load: 6,
            human_reliability_min: 0.8,
            human_reliability_max: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_reviewers: usize,
    pub sim_threshold: f64,
    /// Review budget per timestep, in units of expected review time.
    pub max_reviews_per_timestep: u32,
    pub accept_th: f64,
    pub reject_th: f64,
    pub disc_th: f64,
    pub comp_th: f64,
    pub max_rounds: u32,
    pub noise_base: f64,
    pub noise_complexity_gain: f64,
    pub ai_noise_multiplier: f64,
    pub time_mu: f64,
    pub time_sigma: f64,
    /// AI reviews cost this fraction of a human review's time.
    pub ai_time_multiplier: f64,
    pub max_revisions: u32,
    pub revise_quality_bump: f64,
    pub triage_noise: f64,
    /// A manuscript that fails the triage threshold this many times is desk-rejected.
    pub max_deferrals: u32,
    /// Triage scores below this are desk-rejected without review.
    pub desk_reject_th: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_reviewers: 3,
            sim_threshold: 0.1,
            max_reviews_per_timestep: 180,
            accept_th: 0.7,
            reject_th: 0.4,
            disc_th: 1.4,
            comp_th: 0.55,
            max_rounds: 2,
            noise_base: 0.022,
            noise_complexity_gain: 0.02,
            ai_noise_multiplier: 1.25,
            time_mu: -0.35,
            time_sigma: 0.5,
            ai_time_multiplier: 0.25,
            max_revisions: 1,
            revise_quality_bump: 0.05,
            triage_noise: 0.05,
            max_deferrals: 2,
            desk_reject_th: 0.4,
        }
    }
}

impl PipelineConfig {
    /// Expected time of one human review, `exp(mu + sigma^2 / 2)`.
    pub fn expected_human_time(&self) -> f64 {
        (self.time_mu + 0.5 * self.time_sigma * self.time_sigma).exp()
    }

    /// Manuscripts the review budget admits per timestep at AI fraction `rho_ai`.
    pub fn manuscript_capacity(&self, rho_ai: f64) -> usize {
        let k = self.k_reviewers.max(1);
        let n_ai = crate::pipeline::ai_slots(rho_ai, k) as f64;
        let per = self.expected_human_time() * ((k as f64 - n_ai) + n_ai * self.ai_time_multiplier);
        (self.max_reviews_per_timestep as f64 / per).floor() as usize
    }

    /// Midpoint between the accept and reject thresholds.
    pub fn accept_midpoint(&self) -> f64 {
        0.5 * (self.accept_th + self.reject_th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub w_b: f64,
    pub w_d: f64,
    pub w_l: f64,
    pub w_c: f64,
    pub w_p: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_b: 1.0,
            w_d: 1.0,
            w_l: 1.0,
            w_c: 1.0,
            w_p: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernanceConfig {
    pub backlog_high: usize,
    pub backlog_low: usize,
    pub ai_min: f64,
    pub ai_max: f64,
    pub ai_step: f64,
    pub triage_step: f64,
    pub tau_max: f64,
    pub triage_th0: f64,
    pub disagreement_high: f64,
    pub hysteresis_steps: usize,
    pub objective_weights: ObjectiveWeights,
    pub eta: f64,
    pub ai_fraction_initial: f64,
    pub escalation_initial: bool,
    /// Slow triage drift from smoothed post-publication impact.
    pub impact_feedback: bool,
}

impl Default for GovernanceConfig {
    fn default() -> Self {
        Self {
            backlog_high: 40,
            backlog_low: 10,
            ai_min: 0.1,
            ai_max: 0.6,
            ai_step: 0.05,
            triage_step: 0.03,
            tau_max: 0.7,
            triage_th0: 0.45,
            disagreement_high: 0.30,
            hysteresis_steps: 3,
            objective_weights: ObjectiveWeights::default(),
            eta: 1.0,
            ai_fraction_initial: 0.2,
            escalation_initial: true,
            impact_feedback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Track concentration at all. Activity is controlled by `stress.collusion_active`.
    pub enabled: bool,
    pub cluster_size: usize,
    /// Researchers whose manuscripts the cluster steers toward itself.
    pub affiliated_authors: usize,
    pub alpha: f64,
    pub detect_threshold: f64,
    pub patience: u32,
    pub mitigation_strength: f64,
    pub share_growth: f64,
    pub share_growth_noise: f64,
    pub share_cap: f64,
    pub window: usize,
    pub disable_capture_mitigation: bool,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            cluster_size: 12,
            affiliated_authors: 60,
            alpha: 0.2,
            detect_threshold: 0.2,
            patience: 3,
            mitigation_strength: 0.15,
            share_growth: 0.02,
            share_growth_noise: 0.1,
            share_cap: 0.35,
            window: 5,
            disable_capture_mitigation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostpubConfig {
    pub xi: f64,
    pub q0: f64,
    pub horizon: u32,
    pub smoothing_window: usize,
    pub alpha_a: f64,
    pub alpha_r: f64,
    pub c_bar: f64,
}

impl Default for PostpubConfig {
    fn default() -> Self {
        Self {
            xi: 4.0,
            q0: 0.6,
            horizon: 20,
            smoothing_window: 3,
            alpha_a: 0.1,
            alpha_r: 0.05,
            c_bar: 2.0,
        }
    }
}

/// Stress knobs. Their base values are neutral; windows override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressConfig {
    pub arrival_multiplier: f64,
    pub noise_multiplier: f64,
    /// Offset added to `world.quality_mu`, ramped linearly across its window.
    pub quality_drift: f64,
    pub collusion_active: bool,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            arrival_multiplier: 1.0,
            noise_multiplier: 1.0,
            quality_drift: 0.0,
            collusion_active: false,
        }
    }
}

/// A time-bounded override `[start_t, end_t)` of one configuration field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressWindow {
    pub start_t: u32,
    pub end_t: u32,
    pub path: String,
    pub value: Value,
}

impl StressWindow {
    pub fn contains(&self, t: u32) -> bool {
        self.start_t <= t && t < self.end_t
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Provenance {
    pub source: Option<String>,
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    #[serde(rename = "horizon_T")]
    pub horizon_t: u32,
    pub world: WorldConfig,
    pub pipeline: PipelineConfig,
    pub governance: GovernanceConfig,
    pub adversary: AdversaryConfig,
    pub postpub: PostpubConfig,
    pub stress: StressConfig,
    pub windows: Vec<StressWindow>,
    pub provenance: Provenance,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "baseline".to_string(),
            seed: 123,
            horizon_t: 200,
            world: WorldConfig::default(),
            pipeline: PipelineConfig::default(),
            governance: GovernanceConfig::default(),
            adversary: AdversaryConfig::default(),
            postpub: PostpubConfig::default(),
            stress: StressConfig::default(),
            windows: Vec::new(),
            provenance: Provenance::default(),
        }
    }
}

/// Fields that cannot change after a run has started.
const IMMUTABLE_PREFIXES: &[&str] = &[
    "name",
    "seed",
    "horizon_T",
    "windows",
    "provenance",
    "world.n_authors",
    "world.n_human_reviewers",
    "world.n_ai_reviewers",
    "world.keyword_universe_size",
    "world.keywords_per_researcher",
    "world.human_reliability_min",
    "world.human_reliability_max",
    "adversary.enabled",
    "adversary.cluster_size",
    "adversary.affiliated_authors",
    "adversary.window",
];

impl ScenarioConfig {
    /// SHA-256 over the canonical JSON of the resolved parameters (provenance excluded).
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("provenance");
        }
        let canon = crate::audit::canonical_json(&v);
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        let p = &self.pipeline;
        let g = &self.governance;
        let a = &self.adversary;
        let pp = &self.postpub;
        let bad = |m: String| Err(Error::Config(m));

        if w.n_authors == 0 {
            return bad("world.n_authors must be positive (empty author pool)".into());
        }
        if w.keyword_universe_size == 0 || w.keywords_per_researcher == 0 {
            return bad("keyword universe and per-researcher keyword counts must be positive".into());
        }
        if w.keywords_per_researcher > w.keyword_universe_size {
            return bad("world.keywords_per_researcher exceeds keyword_universe_size".into());
        }
        if w.max_load == 0 {
            return bad("world.max_load must be positive".into());
        }
        check_prob("world.p_sub", w.p_sub)?;
        for (k, v) in [
            ("world.quality_sigma", w.quality_sigma),
            ("world.complexity_sigma", w.complexity_sigma),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{k} must be >= 0"));
            }
        }
        if !(w.human_reliability_min > 0.0 && w.human_reliability_min <= w.human_reliability_max) {
            return bad("human reliability range must satisfy 0 < min <= max".into());
        }
        if p.k_reviewers == 0 {
            return bad("pipeline.k_reviewers must be >= 1".into());
        }
        if p.max_rounds == 0 {
            return bad("pipeline.max_rounds must be >= 1".into());
        }
        if !(p.reject_th < p.accept_th) {
            return bad("pipeline.reject_th must be below accept_th".into());
        }
        if !(p.noise_base >= 0.0 && p.noise_complexity_gain >= 0.0 && p.triage_noise >= 0.0) {
            return bad("noise parameters must be >= 0".into());
        }
        if !(p.ai_noise_multiplier > 0.0 && p.ai_time_multiplier > 0.0) {
            return bad("AI multipliers must be positive".into());
        }
        if !(p.time_sigma > 0.0) {
            return bad("pipeline.time_sigma must be positive".into());
        }
        if p.max_deferrals == 0 {
            return bad("pipeline.max_deferrals must be >= 1".into());
        }
        if !(g.backlog_low < g.backlog_high) {
            return bad("governance.backlog_low must be below backlog_high".into());
        }
        check_prob("governance.ai_min", g.ai_min)?;
        check_prob("governance.ai_max", g.ai_max)?;
        if !(g.ai_min <= g.ai_max) {
            return bad("governance.ai_min must not exceed ai_max".into());
        }
        if !(g.ai_step > 0.0 && g.triage_step > 0.0) {
            return bad("governance step sizes must be positive".into());
        }
        check_prob("governance.tau_max", g.tau_max)?;
        if !(0.0 <= g.triage_th0 && g.triage_th0 <= g.tau_max) {
            return bad("governance requires 0 <= triage_th0 <= tau_max".into());
        }
        if !(g.ai_min <= g.ai_fraction_initial && g.ai_fraction_initial <= g.ai_max) {
            return bad("governance.ai_fraction_initial must lie in [ai_min, ai_max]".into());
        }
        if g.hysteresis_steps == 0 {
            return bad("governance.hysteresis_steps must be >= 1".into());
        }
        check_prob("adversary.alpha", a.alpha)?;
        check_prob("adversary.share_cap", a.share_cap)?;
        check_prob("adversary.mitigation_strength", a.mitigation_strength)?;
        if a.window == 0 {
            return bad("adversary.window must be >= 1".into());
        }
        if a.enabled && a.cluster_size < 2 {
            return bad("adversary.cluster_size must be >= 2".into());
        }
        if a.enabled && a.cluster_size > w.n_human_reviewers.min(w.n_authors) {
            return bad("adversary.cluster_size exceeds the human reviewer pool".into());
        }
        if !(pp.xi > 0.0) || pp.horizon == 0 || pp.smoothing_window == 0 {
            return bad("postpub requires xi > 0, horizon >= 1, smoothing_window >= 1".into());
        }
        if !(pp.alpha_a > 0.0 && pp.alpha_r > 0.0) {
            return bad("postpub credit rates must be positive".into());
        }
        let s = &self.stress;
        if !(s.arrival_multiplier >= 0.0 && s.noise_multiplier > 0.0) {
            return bad("stress multipliers must be non-negative (noise strictly positive)".into());
        }
        let base = serde_json::to_value(ScenarioConfig::default())?;
        for win in &self.windows {
            if !(win.start_t < win.end_t && win.end_t <= self.horizon_t) {
                return bad(format!(
                    "window [{}, {}) for `{}` must satisfy 0 <= start < end <= horizon_T ({})",
                    win.start_t, win.end_t, win.path, self.horizon_t
                ));
            }
            check_window_path(&base, &win.path, &win.value)?;
        }
        Ok(())
    }

    /// Parameters in effect at `t`: the base configuration with every window
    /// that covers `t` applied in declaration order.
    pub fn effective_at(&self, t: u32) -> Result<ScenarioConfig> {
        let active: Vec<&StressWindow> = self.windows.iter().filter(|w| w.contains(t)).collect();
        if active.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        let mut drift = 0.0;
        for w in &active {
            if w.path == "stress.quality_drift" {
                let total = w.value.as_f64().unwrap_or(0.0);
                let span = (w.end_t - w.start_t) as f64;
                drift += total * ((t - w.start_t + 1) as f64 / span);
            } else {
                set_path(&mut doc, &w.path, w.value.clone())?;
            }
        }
        let mut cfg: ScenarioConfig = serde_json::from_value(doc)?;
        cfg.stress.quality_drift = drift;
        Ok(cfg)
    }
}

fn check_prob(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} = {v} is not a probability in [0, 1]")))
    }
}

/// Rejects window/injection paths that are unknown, immutable or of the wrong type.
pub fn check_window_path(base: &Value, path: &str, value: &Value) -> Result<()> {
    if IMMUTABLE_PREFIXES
        .iter()
        .any(|p| path == *p || path.starts_with(&format!("{p}.")))
    {
        return Err(Error::Config(format!("`{path}` cannot be changed while a run is in progress")));
    }
    let current = lookup(base, path).ok_or_else(|| Error::UnknownKey {
        key: path.to_string(),
        valid: leaf_paths(base),
    })?;
    check_kind(path, current, value)
}

fn lookup<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |v, seg| v.as_object()?.get(seg))
}

/// Every dotted leaf path of a configuration document.
pub fn leaf_paths(doc: &Value) -> Vec<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(map) if !map.is_empty() => {
                for (k, child) in map {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, child, out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = Vec::new();
    walk("", doc, &mut out);
    out.retain(|p| !p.starts_with("provenance"));
    out
}

fn check_kind(key: &str, current: &Value, new: &Value) -> Result<()> {
    let ok = match current {
        Value::Number(n) if n.is_f64() => new.is_number(),
        Value::Number(_) => new.is_u64() || new.as_f64().is_some_and(|f| f >= 0.0 && f.fract() == 0.0),
        Value::Bool(_) => new.is_boolean(),
        Value::String(_) => new.is_string(),
        Value::Array(_) => new.is_array(),
        Value::Null => true,
        Value::Object(_) => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::TypeMismatch {
            key: key.to_string(),
            message: format!("expected a value like {current}, got {new}"),
        })
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let unknown = || Error::UnknownKey {
        key: path.to_string(),
        valid: valid_keys(),
    };
    let (parent, leaf) = match path.rsplit_once('.') {
        Some((p, l)) => (Some(p), l),
        None => (None, path),
    };
    let mut cur = &mut *doc;
    if let Some(parent) = parent {
        for seg in parent.split('.') {
            cur = cur.as_object_mut().and_then(|m| m.get_mut(seg)).ok_or_else(unknown)?;
        }
    }
    let slot = cur
        .as_object_mut()
        .and_then(|m| m.get_mut(leaf))
        .ok_or_else(unknown)?;
    if slot.as_object().is_some_and(|m| !m.is_empty()) {
        return Err(unknown());
    }
    check_kind(path, slot, &value)?;
    *slot = value;
    Ok(())
}

fn merge_into(base: &mut Value, patch: Value, prefix: &str) -> Result<()> {
    let Value::Object(patch) = patch else {
        return Err(Error::TypeMismatch {
            key: if prefix.is_empty() { "<root>".into() } else { prefix.to_string() },
            message: "expected a mapping".into(),
        });
    };
    for (k, v) in patch {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if path == "provenance" {
            // A resolved config carries its old provenance; a new one is recorded.
            continue;
        }
        let base_map = base.as_object_mut().expect("object");
        let Some(slot) = base_map.get_mut(&k) else {
            let d = serde_json::to_value(ScenarioConfig::default())?;
            return Err(Error::UnknownKey { key: path, valid: leaf_paths(&d) });
        };
        match slot {
            Value::Object(m) if !m.is_empty() => merge_into(slot, v, &path)?,
            _ => {
                check_kind(&path, slot, &v)?;
                *slot = v;
            }
        }
    }
    Ok(())
}

fn yaml_to_json(y: serde_yaml::Value) -> Result<Value> {
    Ok(serde_json::to_value(y)?)
}

/// Parses a command-line override value (`0.01`, `true`, `baseline`, `[1, 2]`).
pub fn parse_override_value(raw: &str) -> Result<Value> {
    let y: serde_yaml::Value = serde_yaml::from_str(raw)?;
    yaml_to_json(y)
}

/// Splits `key=value` into its parts.
pub fn parse_override_pair(pair: &str) -> Result<(String, String)> {
    match pair.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::Config(format!("override `{pair}` is not of the form key=value"))),
    }
}

/// Resolves a scenario from text (already read) plus overrides.
pub fn resolve_scenario(
    text: &str,
    source: Option<String>,
    overrides: &[(String, String)],
) -> Result<ScenarioConfig> {
    let mut doc = serde_json::to_value(ScenarioConfig::default())?;
    let file: serde_yaml::Value = if text.trim().is_empty() {
        serde_yaml::Value::Null
    } else {
        serde_yaml::from_str(text)?
    };
    if !file.is_null() {
        merge_into(&mut doc, yaml_to_json(file)?, "")?;
    }
    for (k, raw) in overrides {
        if k == "provenance" || k.starts_with("provenance.") {
            return Err(Error::UnknownKey { key: k.clone(), valid: leaf_paths(&doc) });
        }
        let v = parse_override_value(raw)?;
        set_path(&mut doc, k, v)?;
    }
    let mut cfg: ScenarioConfig =
        serde_json::from_value(doc).map_err(|e| Error::TypeMismatch {
            key: "<scenario>".into(),
            message: e.to_string(),
        })?;
    cfg.provenance = Provenance {
        source,
        overrides: overrides.to_vec(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads `path` and applies `overrides` on top of the defaults.
pub fn load_scenario(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    resolve_scenario(&text, Some(path.display().to_string()), overrides)
}

/// Keys accepted in scenario files and overrides.
pub fn valid_keys() -> Vec<String> {
    let d = serde_json::to_value(ScenarioConfig::default()).expect("defaults serialize");
    leaf_paths(&d)
}

/// Set of paths under `stress.`, used by steering helpers.
pub fn stress_paths() -> BTreeSet<String> {
    valid_keys().into_iter().filter(|k| k.starts_with("stress.")).collect()
}
