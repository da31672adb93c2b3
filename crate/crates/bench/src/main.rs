use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pkbench::experiment::{parse_seeds, read_csv, run_experiment, ExperimentOptions, Sweep};
use pkbench::replay::replay_open_loop;
use pkbench::report::emit_report;
use pkbench::scenario::Scenario;
use pkpiece::planner::{plan, Mode, Outcome, Plan};
use serde::{Deserialize, Serialize};

/// Campaign log inside an output directory.
const RUNS_CSV: &str = "runs.csv";

#[derive(Parser)]
#[command(
    name = "pkpiece",
    version,
    about = "Physics-based kinodynamic planning under pose and control uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan once and optionally save the plan as JSON.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "probabilistic")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded campaign; resumes from an existing runs.csv.
    Bench {
        scenario: PathBuf,
        /// `A..B` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long, value_delimiter = ',', default_value = "probabilistic,baseline")]
        modes: Vec<Mode>,
        /// `param=v1,v2,...`
        #[arg(long)]
        sweep: Option<Sweep>,
        /// Replay trials per solved plan; defaults to the scenario value.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, env = "PKPIECE_OUT", default_value = "pkpiece-out")]
        out: PathBuf,
    },
    /// Execute a saved plan open loop under sampled noise.
    Replay {
        scenario: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rebuild the CSV and charts from a campaign directory.
    Report {
        #[arg(env = "PKPIECE_OUT", default_value = "pkpiece-out")]
        dir: PathBuf,
    },
    /// Write the standard tabletop scenario.
    Init {
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        clutter: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    scenario: String,
    seed: u64,
    mode: Mode,
    plan: Plan,
}

/// Input problems map to exit code 2, everything else to 1.
enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn run_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Run(e.into())
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(input)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Plan {
            scenario,
            seed,
            mode,
            out,
        } => {
            let sc = load(&scenario)?;
            let query = sc.query(mode).map_err(input)?;
            let outcome = plan(&query, seed).map_err(input)?;
            let s = outcome.statistics();
            println!(
                "{} seed {seed} {}: {} in {:.3} s, {} iterations, {} states, {} cells",
                sc.name,
                mode.name(),
                if outcome.plan().is_some() {
                    "solved"
                } else {
                    "failed"
                },
                s.wall_time_s,
                s.iterations,
                s.states,
                s.cells
            );
            let Outcome::Solved(p) = outcome else {
                return Err(run_err(anyhow::anyhow!("no plan found within the budget")));
            };
            println!("plan: {} steps, {:.3} s", p.steps.len(), p.duration);
            if let Some(path) = out {
                let file = PlanFile {
                    scenario: sc.name.clone(),
                    seed,
                    mode,
                    plan: p,
                };
                let text = serde_json::to_string_pretty(&file).map_err(run_err)?;
                std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(run_err)?;
            }
            Ok(())
        }
        Command::Bench {
            scenario,
            seeds,
            modes,
            sweep,
            trials,
            out,
        } => {
            let sc = load(&scenario)?;
            let seeds = parse_seeds(&seeds).map_err(|e| input(anyhow::anyhow!(e)))?;
            let opts = ExperimentOptions {
                replay_trials: trials.unwrap_or(sc.replay.trials),
            };
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))
                .map_err(run_err)?;
            let result = run_experiment(
                &sc,
                &seeds,
                &modes,
                sweep.as_ref(),
                &opts,
                Some(&out.join(RUNS_CSV)),
            )
            .map_err(input)?;
            let solved = result.records.iter().filter(|r| r.success).count();
            println!(
                "{} runs ({} new), {} solved; writing report to {}",
                result.records.len(),
                result.executed,
                solved,
                out.display()
            );
            emit_report(&result.records, &out).map_err(run_err)?;
            Ok(())
        }
        Command::Replay {
            scenario,
            plan,
            trials,
            seed,
        } => {
            let sc = load(&scenario)?;
            let text = std::fs::read_to_string(&plan)
                .with_context(|| format!("reading {}", plan.display()))
                .map_err(input)?;
            let file: PlanFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", plan.display()))
                .map_err(input)?;
            let query = sc.query(file.mode).map_err(input)?;
            let trials = trials.unwrap_or(sc.replay.trials);
            let frac = replay_open_loop(&query, &file.plan, trials, seed);
            println!("replay success {frac:.4} over {trials} trials");
            Ok(())
        }
        Command::Report { dir } => {
            let path = dir.join(RUNS_CSV);
            let records = read_csv(&path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(input)?;
            let written = emit_report(&records, &dir).map_err(run_err)?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Init { out, clutter } => Scenario::tabletop(clutter)
            .save(&out)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(run_err),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
