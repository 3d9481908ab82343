use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use govsim_cli::{
    cmd_batch, cmd_report, cmd_run, cmd_sweep, cmd_verify, out_root, parse_seeds, plot, CliError, Report,
    ScenarioArgs,
};
use govsim_core::audit::ChainStatus;

#[derive(Parser)]
#[command(name = "govsim", version, about = "Closed-loop editorial governance simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ScenarioFlags {
    /// Scenario YAML file.
    scenario: PathBuf,
    /// Dotted `key=value` override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root (default: $GOVSIM_OUT, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioFlags {
    fn args(&self, seed: Option<u64>) -> ScenarioArgs {
        ScenarioArgs {
            path: self.scenario.clone(),
            seed,
            overrides: self.overrides.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its run directory.
    Run {
        #[command(flatten)]
        s: ScenarioFlags,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one scenario over several seeds and print aggregate statistics.
    Batch {
        #[command(flatten)]
        s: ScenarioFlags,
        /// Seeds, e.g. `1..10` or `1,2,5`.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Cartesian sweep of one parameter over values and seeds.
    Sweep {
        #[command(flatten)]
        s: ScenarioFlags,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value = "123")]
        seeds: String,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Median/min/max of summary fields across run directories of one scenario.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write `metrics.svg` into each run directory.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        json: bool,
    },
    /// Verify a run's audit chain.
    Verify { run_dir: PathBuf },
    /// Start the local control service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: SocketAddr,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_report(r: &Report) {
    println!("scenario {} ({} runs)", r.scenario, r.runs);
    println!("{:<26} {:>12} {:>12} {:>12} {:>4}", "field", "median", "min", "max", "n");
    for (name, s) in &r.stats {
        println!("{name:<26} {:>12.6} {:>12.6} {:>12.6} {:>4}", s.median, s.min, s.max, s.n);
    }
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { s, seed } => {
            let dir = cmd_run(&s.args(seed), &out_root(s.out.as_deref()))?;
            println!("{}", dir.display());
        }
        Cmd::Batch { s, seeds, jobs } => {
            let seeds = parse_seeds(&seeds)?;
            let runs = cmd_batch(&s.args(None), &seeds, &out_root(s.out.as_deref()), jobs)?;
            for (dir, _) in &runs {
                println!("{}", dir.display());
            }
            let dirs: Vec<PathBuf> = runs.into_iter().map(|(d, _)| d).collect();
            print_report(&cmd_report(&dirs)?);
        }
        Cmd::Sweep {
            s,
            param,
            values,
            seeds,
            jobs,
        } => {
            let seeds = parse_seeds(&seeds)?;
            let sw = cmd_sweep(&s.args(None), &param, &values, &seeds, &out_root(s.out.as_deref()), jobs)?;
            println!(
                "{:<14} {:>6} {:>14} {:>8} {:>14}",
                sw.param, "seed", "final_backlog", "tau(T)", "escalations"
            );
            for r in &sw.rows {
                println!(
                    "{:<14} {:>6} {:>14} {:>8.4} {:>14}",
                    r.value, r.seed, r.final_backlog, r.tau_final, r.total_escalations
                );
            }
            println!("{}", sw.dir.join("sweep_summary.csv").display());
        }
        Cmd::Report { runs, plot: p, json } => {
            let r = cmd_report(&runs)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            } else {
                print_report(&r);
            }
            if p {
                for d in &runs {
                    println!("{}", plot::plot_run(d)?.display());
                }
            }
        }
        Cmd::Verify { run_dir } => {
            if let ChainStatus::Ok { events, head } = cmd_verify(&run_dir)? {
                println!("ok: {events} events, head {head}");
            }
        }
        Cmd::Serve { bind } => {
            if !bind.ip().is_loopback() {
                eprintln!("warning: serving on non-loopback address {bind} without authentication");
            }
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::Io { path: PathBuf::from("<runtime>"), source: e })?;
            eprintln!("listening on http://{bind}");
            rt.block_on(govsim_service::serve(bind))
                .map_err(|e| CliError::Io { path: PathBuf::from(bind.to_string()), source: e })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
