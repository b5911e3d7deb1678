//! Experiment orchestration: configs, trials, results on disk, plots, and
//! the property-check and exact-solve frontends.

pub mod check;
pub mod config;
pub mod plot;
pub mod runner;
pub mod solve;
pub mod trial;

pub use check::{run_check, CheckReport, PropertyResult, SUITES};
pub use config::{ConvergenceCriteria, ExperimentConfig, LearnerSpec};
pub use runner::{run_experiment, run_trials, trial_csv, write_results, FailedTrial, RunOutput, Summary, FINAL_WINDOW};
pub use solve::{solve_game, SolveReport};
pub use trial::{first_crossing, run_trial, ContinuousEpisode, DiscreteEpisode, Series, TrialResult};
