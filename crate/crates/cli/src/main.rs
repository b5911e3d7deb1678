use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rommeo::harness::{self, ExperimentConfig};
use rommeo::soft::SoftConfig;

#[derive(Parser)]
#[command(name = "rommeo", version, about = "Regularized opponent-model learners on cooperative games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config and write a results directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the base seed; trial k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        /// Results directory (defaults to the config's out_dir, then ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Solve a discrete game exactly and print Q*, V*, pi*, rho*.
    Solve {
        #[arg(long)]
        game: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Seat whose view of the game to solve.
        #[arg(long, default_value_t = 0)]
        agent: usize,
        /// Print the solution as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Run property suites and print a JSON report; exits nonzero on failure.
    Check {
        /// One of solver, contraction, monotone, gradients, v-bar, environment, or all.
        #[arg(long)]
        suite: String,
    },
    /// Regenerate SVG plots from a results directory.
    Plot {
        #[arg(long)]
        results: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, trials, seed, out, workers, no_plots } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            cfg.validate()?;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let summary = harness::run_experiment(&cfg, &dir, workers)?;
            if !no_plots && summary.trials_completed > 0 {
                harness::plot::render_results(&dir, cfg.convergence.joint_probability, cfg.convergence.reward)?;
            }
            println!(
                "{} trials completed, {} failed; convergence rate {:.3}; mean final-{} reward {:.4}; results in {}",
                summary.trials_completed,
                summary.failed.len(),
                summary.convergence_rate,
                harness::FINAL_WINDOW,
                summary.mean_final10_reward,
                dir.display()
            );
            for f in &summary.failed {
                eprintln!("trial {} (seed {}) failed: {}", f.index, f.seed, f.error);
            }
            Ok(if summary.failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Solve { game, alpha, gamma, agent, json } => {
            let cfg = SoftConfig { alpha, gamma, ..SoftConfig::default() };
            let report = harness::solve_game(&game, agent, &cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { suite } => {
            if suite.trim().is_empty() {
                bail!("--suite needs a suite id (one of {} or all)", harness::SUITES.join(", "));
            }
            let report = harness::run_check(&suite)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Plot { results } => {
            let cfg = ExperimentConfig::load(&results.join("config.json"))
                .with_context(|| format!("reading {}", results.join("config.json").display()))?;
            let files = harness::plot::render_results(&results, cfg.convergence.joint_probability, cfg.convergence.reward)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
