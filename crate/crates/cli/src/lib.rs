//! Command implementations behind the `govsim` binary.
//!
//! Each `cmd_*` function is what the matching subcommand runs, minus argument
//! parsing and printing, so tests can drive them directly. Exit codes: 0 ok,
//! 1 verification failure, 2 configuration or usage error, 3 runtime failure.

pub mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};

use govsim_core::audit::{verify_chain, ChainStatus};
use govsim_core::config::parse_override_pair;
use govsim_core::report::{aggregate, Stat};
use govsim_core::{load_scenario, ScenarioConfig, Summary};
use rayon::prelude::*;
use serde::Serialize;

pub const OUT_ENV: &str = "GOVSIM_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] govsim_core::Error),
    #[error("audit chain broken at seq {seq} in {path}")]
    Broken { seq: u64, path: PathBuf },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Sim(e) if e.is_config() => 2,
            CliError::Broken { .. } => 1,
            CliError::Sim(_) | CliError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// `--out`, else `$GOVSIM_OUT`, else `./runs`.
pub fn out_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
    }
}

/// Scenario file plus `key=value` overrides and an optional seed.
#[derive(Debug, Clone, Default)]
pub struct ScenarioArgs {
    pub path: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
}

impl ScenarioArgs {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_override(mut self, pair: &str) -> Self {
        self.overrides.push(pair.to_string());
        self
    }

    pub fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut ov = self
            .overrides
            .iter()
            .map(|p| parse_override_pair(p))
            .collect::<govsim_core::Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            ov.push(("seed".into(), seed.to_string()));
        }
        Ok(ov)
    }

    pub fn resolve(&self) -> Result<ScenarioConfig> {
        if !self.path.is_file() {
            return Err(CliError::Usage(format!("scenario file {} not found", self.path.display())));
        }
        Ok(load_scenario(&self.path, &self.pairs()?)?)
    }
}

/// Runs one scenario; returns the run directory.
pub fn cmd_run(args: &ScenarioArgs, out: &Path) -> Result<PathBuf> {
    let cfg = args.resolve()?;
    Ok(govsim_core::run(cfg, out)?)
}

/// Parses `1,2,3`, `1..10` (inclusive) or a mix such as `1..3,7`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Usage(format!("bad seed list `{spec}`"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("seed list is empty".into()));
    }
    Ok(out)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

/// Runs every configuration (each isolated) on `jobs` workers, in input order.
fn run_all(cfgs: Vec<ScenarioConfig>, out: &Path, jobs: usize) -> Result<Vec<(PathBuf, Summary)>> {
    pool(jobs)?.install(|| {
        cfgs.into_par_iter()
            .map(|cfg| {
                let dir = govsim_core::run(cfg, out)?;
                let s = Summary::read(&dir.join("summary.json"))?;
                Ok((dir, s))
            })
            .collect()
    })
}

/// Same scenario over several seeds.
pub fn cmd_batch(args: &ScenarioArgs, seeds: &[u64], out: &Path, jobs: usize) -> Result<Vec<(PathBuf, Summary)>> {
    if seeds.is_empty() {
        return Err(CliError::Usage("seed list is empty".into()));
    }
    let cfgs = seeds
        .iter()
        .map(|&s| args.clone().with_seed(s).resolve())
        .collect::<Result<Vec<_>>>()?;
    run_all(cfgs, out, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub final_backlog: usize,
    pub tau_final: f64,
    pub total_escalations: u64,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub param: String,
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Cartesian product `values × seeds`; writes `sweep_summary.csv` and
/// `sweep_summary.json` next to the per-cell run directories.
pub fn cmd_sweep(
    args: &ScenarioArgs,
    param: &str,
    values: &[String],
    seeds: &[u64],
    out: &Path,
    jobs: usize,
) -> Result<Sweep> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(CliError::Usage("seed list is empty".into()));
    }
    let mut cells = Vec::new();
    let mut cfgs = Vec::new();
    for v in values {
        for &seed in seeds {
            let cell = args.clone().with_override(&format!("{param}={v}")).with_seed(seed);
            cfgs.push(cell.resolve()?);
            cells.push((v.clone(), seed));
        }
    }
    let base = cfgs[0].clone();
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let dir = unique_dir(out, &format!("sweep-{}-{}-{stamp}", base.name, param))?;
    let runs = run_all(cfgs, &dir, jobs)?;
    let rows: Vec<SweepRow> = cells
        .into_iter()
        .zip(runs)
        .map(|((value, seed), (run_dir, s))| SweepRow {
            value,
            seed,
            final_backlog: s.final_backlog,
            tau_final: s.tau_final,
            total_escalations: s.total_escalations,
            run_dir,
        })
        .collect();
    write_sweep(&dir, param, &rows)?;
    Ok(Sweep {
        param: param.to_string(),
        dir,
        rows,
    })
}

fn unique_dir(root: &Path, base: &str) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(root).map_err(io(root))?;
    let mut dir = root.join(base);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = root.join(format!("{base}-{n}"));
                n += 1;
            }
            Err(e) => return Err(io(&dir)(e)),
        }
    }
}

fn write_sweep(dir: &Path, param: &str, rows: &[SweepRow]) -> Result<()> {
    let csv_path = dir.join("sweep_summary.csv");
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    let mut f = std::fs::File::create(&csv_path).map_err(io(&csv_path))?;
    let mut text = format!("{param},seed,final_backlog,tau_final,total_escalations,run_dir\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.value,
            r.seed,
            r.final_backlog,
            govsim_core::audit::fmt_real(r.tau_final),
            r.total_escalations,
            r.run_dir.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
        ));
    }
    f.write_all(text.as_bytes()).map_err(io(&csv_path))?;
    let json_path = dir.join("sweep_summary.json");
    let body = serde_json::json!({ "param": param, "rows": rows });
    std::fs::write(&json_path, serde_json::to_string_pretty(&body).expect("rows serialize") + "\n")
        .map_err(io(&json_path))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub runs: usize,
    pub stats: Vec<(String, Stat)>,
}

/// Statistics over the `summary.json` of each run directory. All runs must
/// come from the same scenario.
pub fn cmd_report(dirs: &[PathBuf]) -> Result<Report> {
    if dirs.is_empty() {
        return Err(CliError::Usage("report needs at least one run directory".into()));
    }
    let summaries = dirs
        .iter()
        .map(|d| {
            let p = d.join("summary.json");
            if !p.is_file() {
                return Err(CliError::Usage(format!("{} has no summary.json", d.display())));
            }
            Ok(Summary::read(&p)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let scenario = summaries[0].scenario.clone();
    if let Some(other) = summaries.iter().find(|s| s.scenario != scenario) {
        return Err(CliError::Usage(format!(
            "runs mix scenarios `{scenario}` and `{}`; report one regime at a time",
            other.scenario
        )));
    }
    Ok(Report {
        scenario,
        runs: summaries.len(),
        stats: aggregate(&summaries),
    })
}

/// Checks `events.jsonl` in `dir`.
pub fn cmd_verify(dir: &Path) -> Result<ChainStatus> {
    let path = if dir.is_dir() { dir.join("events.jsonl") } else { dir.to_path_buf() };
    if !path.is_file() {
        return Err(CliError::Usage(format!("no audit log at {}", path.display())));
    }
    match verify_chain(&path)? {
        ChainStatus::BrokenAt { seq } => Err(CliError::Broken { seq, path }),
        ok => Ok(ok),
    }
}
