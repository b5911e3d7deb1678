use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::rommeo_ac::AcConfig;
use crate::rommeo_q::QConfig;

/// Learner for one seat, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    RommeoQ {
        #[serde(default)]
        config: QConfig,
    },
    RommeoQEmp {
        #[serde(default)]
        config: QConfig,
    },
    Jal {
        #[serde(default)]
        config: BaselineConfig,
    },
    WolfPhc {
        #[serde(default)]
        config: BaselineConfig,
    },
    Fmq {
        #[serde(default)]
        config: BaselineConfig,
    },
    RommeoAc {
        #[serde(default)]
        config: AcConfig,
    },
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::RommeoQ { .. } => "rommeo_q",
            LearnerSpec::RommeoQEmp { .. } => "rommeo_q_emp",
            LearnerSpec::Jal { .. } => "jal",
            LearnerSpec::WolfPhc { .. } => "wolf_phc",
            LearnerSpec::Fmq { .. } => "fmq",
            LearnerSpec::RommeoAc { .. } => "rommeo_ac",
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, LearnerSpec::RommeoAc { .. })
    }

    pub(crate) fn baseline(&self) -> Option<(BaselineKind, &BaselineConfig)> {
        match self {
            LearnerSpec::Jal { config } => Some((BaselineKind::Jal, config)),
            LearnerSpec::WolfPhc { config } => Some((BaselineKind::WolfPhc, config)),
            LearnerSpec::Fmq { config } => Some((BaselineKind::Fmq, config)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::RommeoQ { config } | LearnerSpec::RommeoQEmp { config } => config.validate(),
            LearnerSpec::Jal { config } | LearnerSpec::WolfPhc { config } | LearnerSpec::Fmq { config } => {
                config.validate()
            }
            LearnerSpec::RommeoAc { config } => config.validate(),
        }
    }
}

/// Thresholds that define a converged trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceCriteria {
    /// Discrete games: end-of-run probability of the optimal joint action under both agents' policies.
    pub joint_probability: f64,
    /// Continuous games: final-episode mean reward.
    pub reward: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self { joint_probability: 0.9, reward: 9.0 }
    }
}

/// A complete, reproducible experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `climbing`, `climbing-printed` or `max-two-quadratics`.
    pub game: String,
    pub agents: [LearnerSpec; 2],
    pub episodes: usize,
    #[serde(default = "one")]
    pub steps_per_episode: usize,
    #[serde(default = "one")]
    pub trials: usize,
    /// Trial `k` runs with seed `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub convergence: ConvergenceCriteria,
    /// Keep each agent's final state as JSON in the trial result.
    #[serde(default)]
    pub checkpoints: bool,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn self_play(game: &str, learner: LearnerSpec, episodes: usize, steps_per_episode: usize, trials: usize) -> Self {
        Self {
            game: game.to_string(),
            agents: [learner.clone(), learner],
            episodes,
            steps_per_episode,
            trials,
            seed: 0,
            out_dir: None,
            convergence: ConvergenceCriteria::default(),
            checkpoints: false,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.episodes == 0 || self.steps_per_episode == 0 {
            return Err(Error::Config("trials, episodes and steps_per_episode must be at least 1".into()));
        }
        let game = Game::from_id(&self.game).map_err(|e| Error::Config(e.to_string()))?;
        for (i, spec) in self.agents.iter().enumerate() {
            spec.validate().map_err(|e| Error::Config(format!("agent {i}: {e}")))?;
            let continuous_game = matches!(game, Game::Differential(_));
            if spec.is_continuous() != continuous_game {
                return Err(Error::Unsupported(format!("learner {} cannot play {}", spec.name(), self.game)));
            }
        }
        Ok(())
    }

    pub fn game(&self) -> Result<Game> {
        Game::from_id(&self.game)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_config() {
        let cfg = ExperimentConfig::from_json(
            r#"{"game": "climbing", "agents": [{"kind": "rommeo_q"}, {"kind": "jal", "config": {"lr": 0.2}}], "episodes": 10}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.steps_per_episode, 1);
        assert!(matches!(&cfg.agents[1], LearnerSpec::Jal { config } if config.lr == 0.2));
        let back = ExperimentConfig::from_json(&cfg.to_json_pretty().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parse_errors_carry_a_location() {
        let err = ExperimentConfig::from_json("{\"game\": \"climbing\",\n \"agents\": 3}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"game": "climbing", "agents": [{"kind": "nope"}, {"kind": "jal"}], "episodes": 1}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_mismatched_learners_and_empty_runs() {
        let cfg = ExperimentConfig::self_play("max-two-quadratics", LearnerSpec::Jal { config: Default::default() }, 5, 1, 1);
        assert!(matches!(cfg.validate(), Err(Error::Unsupported(_))));
        let cfg = ExperimentConfig::self_play("climbing", LearnerSpec::RommeoAc { config: Default::default() }, 5, 1, 1);
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::self_play("climbing", LearnerSpec::RommeoQ { config: Default::default() }, 5, 1, 0);
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::self_play("nope", LearnerSpec::RommeoQ { config: Default::default() }, 5, 1, 1);
        assert!(cfg.validate().is_err());
    }
}
