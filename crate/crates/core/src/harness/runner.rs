//! Parallel trial execution and the on-disk results layout.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trial::{run_trial, Series, TrialResult};
use crate::error::{Error, Result};
use crate::nn::{JACOBIAN_EPS, LOG_STD_MAX, LOG_STD_MIN};

/// Episodes averaged for the "final" reward statistics.
pub const FINAL_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    /// Completed trials, ordered by index.
    pub trials: Vec<TrialResult>,
    pub failed: Vec<FailedTrial>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs every trial of `cfg` on `workers` threads (0 picks the core count).
///
/// Each trial derives all randomness from its own seed, so results do not
/// depend on `workers`. A trial that errors or panics is recorded in
/// `failed` and the rest continue.
pub fn run_trials(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, std::result::Result<TrialResult, String>)> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let outcome = match catch_unwind(AssertUnwindSafe(|| run_trial(cfg, k))) {
                    Ok(Ok(t)) => Ok(t),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(panic_message(p)),
                };
                (k, outcome)
            })
            .collect()
    });
    let mut out = RunOutput::default();
    for (index, outcome) in outcomes {
        match outcome {
            Ok(t) => out.trials.push(t),
            Err(error) => out.failed.push(FailedTrial { index, seed: cfg.trial_seed(index), error }),
        }
    }
    Ok(out)
}

fn cell(v: f64) -> String {
    format!("{v}")
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

/// Per-episode time series of one trial as CSV with a header row.
pub fn trial_csv(trial: &TrialResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match &trial.series {
        Series::Discrete(eps) => {
            let n_joint = eps.first().map_or(0, |e| e.joint.len());
            let mut header: Vec<String> = [
                "episode", "mean_reward", "joint_opt", "pi1_opt", "pi2_opt", "rho1_opt", "rho2_opt", "freq1_opt", "freq2_opt",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            header.extend((0..n_joint).map(|k| format!("joint_{k}")));
            w.write_record(&header)?;
            for e in eps {
                let mut row = vec![
                    e.episode.to_string(),
                    cell(e.mean_reward),
                    cell(e.joint_opt),
                    cell(e.pi1_opt),
                    cell(e.pi2_opt),
                    opt_cell(e.rho1_opt),
                    opt_cell(e.rho2_opt),
                    cell(e.freq1_opt),
                    cell(e.freq2_opt),
                ];
                row.extend(e.joint.iter().map(|&p| cell(p)));
                w.write_record(&row)?;
            }
        }
        Series::Continuous(eps) => {
            w.write_record([
                "episode", "mean_reward", "a1_last", "a2_last", "a1_mean", "a2_mean", "pi1_mean", "pi2_mean", "rho1_mean",
                "rho2_mean", "prior1_mean", "prior2_mean",
            ])?;
            for e in eps {
                let vals = [
                    e.mean_reward, e.a1_last, e.a2_last, e.a1_mean, e.a2_mean, e.pi1_mean, e.pi2_mean, e.rho1_mean, e.rho2_mean,
                    e.prior1_mean, e.prior2_mean,
                ];
                let mut row = vec![e.episode.to_string()];
                row.extend(vals.iter().map(|&v| cell(v)));
                w.write_record(&row)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub library_version: String,
    /// Seconds since the Unix epoch when the summary was written.
    pub created_unix: u64,
    pub workers: usize,
    pub log_std_bounds: [f64; 2],
    pub jacobian_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub final_reward: f64,
    pub final10_mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// The only field that varies between identical runs.
    pub metadata: Metadata,
    pub config: ExperimentConfig,
    pub trials_completed: usize,
    pub convergence_rate: f64,
    pub mean_final10_reward: f64,
    pub trials: Vec<TrialSummary>,
    pub failed: Vec<FailedTrial>,
    /// Mean reward per episode across completed trials.
    pub mean_reward_curve: Vec<f64>,
}

impl Summary {
    pub fn new(cfg: &ExperimentConfig, run: &RunOutput, workers: usize) -> Self {
        let trials: Vec<TrialSummary> = run
            .trials
            .iter()
            .map(|t| TrialSummary {
                index: t.index,
                seed: t.seed,
                converged: t.converged,
                final_reward: t.final_reward(),
                final10_mean_reward: t.tail_mean_reward(FINAL_WINDOW),
            })
            .collect();
        let n = trials.len().max(1) as f64;
        let mut curve = vec![0.0; cfg.episodes];
        for t in &run.trials {
            for (c, r) in curve.iter_mut().zip(t.series.mean_rewards()) {
                *c += r / n;
            }
        }
        Summary {
            metadata: Metadata {
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                workers,
                log_std_bounds: [LOG_STD_MIN, LOG_STD_MAX],
                jacobian_eps: JACOBIAN_EPS,
            },
            config: cfg.clone(),
            trials_completed: trials.len(),
            convergence_rate: trials.iter().filter(|t| t.converged).count() as f64 / n,
            mean_final10_reward: trials.iter().map(|t| t.final10_mean_reward).sum::<f64>() / n,
            trials,
            failed: run.failed.clone(),
            mean_reward_curve: curve,
        }
    }
}

/// Writes `config.json`, `trial_<k>.csv`, optional checkpoints and `summary.json`.
pub fn write_results(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput, workers: usize) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), cfg.to_json_pretty()?)?;
    for t in &run.trials {
        std::fs::write(dir.join(format!("trial_{}.csv", t.index)), trial_csv(t)?)?;
        if let Some([c1, c2]) = &t.checkpoints {
            std::fs::write(dir.join(format!("trial_{}_agent0.json", t.index)), c1)?;
            std::fs::write(dir.join(format!("trial_{}_agent1.json", t.index)), c2)?;
        }
    }
    let summary = Summary::new(cfg, run, workers);
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Runs all trials and writes the results directory.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, workers: usize) -> Result<Summary> {
    let run = run_trials(cfg, workers)?;
    write_results(dir, cfg, &run, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::LearnerSpec;
    use crate::rommeo_q::QConfig;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::self_play("climbing", LearnerSpec::RommeoQ { config: QConfig::default() }, 5, 1, 3);
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = small();
        let a = run_trials(&cfg, 1).unwrap();
        let b = run_trials(&cfg, 3).unwrap();
        assert_eq!(a.trials.len(), 3);
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(trial_csv(x).unwrap(), trial_csv(y).unwrap());
        }
        assert_eq!(a.trials.iter().map(|t| t.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn csv_has_header_and_one_row_per_episode() {
        let run = run_trials(&small(), 1).unwrap();
        let csv = trial_csv(&run.trials[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("episode,mean_reward,joint_opt"));
        assert!(lines[0].ends_with("joint_8"));
    }

    #[test]
    fn summary_counts_convergence() {
        let cfg = small();
        let run = run_trials(&cfg, 1).unwrap();
        let s = Summary::new(&cfg, &run, 1);
        assert_eq!(s.trials_completed, 3);
        assert_eq!(s.mean_reward_curve.len(), 5);
        let rate = s.trials.iter().filter(|t| t.converged).count() as f64 / 3.0;
        assert_eq!(s.convergence_rate, rate);
        assert_eq!(s.metadata.log_std_bounds, [LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn write_results_lays_out_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.checkpoints = true;
        run_experiment(&cfg, dir.path(), 2).unwrap();
        for f in ["config.json", "summary.json", "trial_0.csv", "trial_2.csv", "trial_1_agent0.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = ExperimentConfig::load(&dir.path().join("config.json")).unwrap();
        assert_eq!(back, cfg);
    }
}
