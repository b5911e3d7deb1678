use serde::{Deserialize, Serialize};

use crate::baselines::{self, DiscreteLearner};
use crate::error::{Error, Result};
use crate::game::{Action, Game, MatrixGame, Transition, STATELESS};
use crate::rommeo_ac::AcAgent;
use crate::rommeo_q::QLearner;

use super::config::{ExperimentConfig, LearnerSpec};

/// Per-episode metrics in a discrete game. Probabilities refer to each
/// agent's component of the optimal joint action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEpisode {
    pub episode: usize,
    pub mean_reward: f64,
    /// `π¹(a¹*) · π²(a²*)` at the end of the episode.
    pub joint_opt: f64,
    pub pi1_opt: f64,
    pub pi2_opt: f64,
    /// Agent i's opponent-model probability of the opponent's optimal action; absent for model-free learners.
    pub rho1_opt: Option<f64>,
    pub rho2_opt: Option<f64>,
    /// Agent i's cumulative observed frequency of the opponent's optimal action.
    pub freq1_opt: f64,
    pub freq2_opt: f64,
    /// Row-major `π¹ ⊗ π²` over all joint actions.
    pub joint: Vec<f64>,
}

/// Per-episode metrics in a continuous game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEpisode {
    pub episode: usize,
    pub mean_reward: f64,
    /// Actions taken at the last step of the episode.
    pub a1_last: f64,
    pub a2_last: f64,
    pub a1_mean: f64,
    pub a2_mean: f64,
    pub pi1_mean: f64,
    pub pi2_mean: f64,
    pub rho1_mean: f64,
    pub rho2_mean: f64,
    pub prior1_mean: f64,
    pub prior2_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "episodes", rename_all = "snake_case")]
pub enum Series {
    Discrete(Vec<DiscreteEpisode>),
    Continuous(Vec<ContinuousEpisode>),
}

impl Series {
    pub fn len(&self) -> usize {
        match self {
            Series::Discrete(v) => v.len(),
            Series::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_rewards(&self) -> Vec<f64> {
        match self {
            Series::Discrete(v) => v.iter().map(|e| e.mean_reward).collect(),
            Series::Continuous(v) => v.iter().map(|e| e.mean_reward).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub series: Series,
    pub converged: bool,
    /// Each agent's final state as JSON, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<[String; 2]>,
}

impl TrialResult {
    pub fn final_reward(&self) -> f64 {
        *self.series.mean_rewards().last().expect("at least one episode")
    }

    /// Mean reward over the last `n` episodes.
    pub fn tail_mean_reward(&self, n: usize) -> f64 {
        let r = self.series.mean_rewards();
        let tail = &r[r.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// First episode index at which `values` reaches `threshold`.
pub fn first_crossing(values: impl IntoIterator<Item = f64>, threshold: f64) -> Option<usize> {
    values.into_iter().position(|v| v >= threshold)
}

/// Per-agent seed within a trial.
pub fn agent_seed(trial_seed: u64, agent: usize) -> u64 {
    trial_seed.wrapping_mul(2).wrapping_add(agent as u64)
}

/// Runs one trial of `cfg` with seed `cfg.trial_seed(index)`.
pub fn run_trial(cfg: &ExperimentConfig, index: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let seed = cfg.trial_seed(index);
    match cfg.game()? {
        Game::Matrix(m) => run_discrete(cfg, &m, index, seed),
        Game::Differential(_) => run_continuous(cfg, index, seed),
    }
}

fn discrete_learner(spec: &LearnerSpec, game: &Game, agent: usize, seed: u64) -> Result<Box<dyn DiscreteLearner>> {
    let Game::Matrix(m) = game else {
        return Err(Error::Unsupported("discrete learner in a continuous game".into()));
    };
    let n = m.n_actions();
    let (own, opp) = (n[agent], n[1 - agent]);
    match spec {
        LearnerSpec::RommeoQ { config } => Ok(Box::new(QLearner::seeded(1, own, opp, config.clone(), seed)?)),
        LearnerSpec::RommeoQEmp { config } => Ok(Box::new(baselines::rommeo_q_emp(1, own, opp, config.clone(), seed)?)),
        LearnerSpec::RommeoAc { .. } => Err(Error::Unsupported("rommeo_ac needs a continuous game".into())),
        other => {
            let (kind, bc) = other.baseline().expect("remaining learners are baselines");
            baselines::build(kind, bc, game, agent, seed)
        }
    }
}

fn run_discrete(cfg: &ExperimentConfig, m: &MatrixGame, index: usize, seed: u64) -> Result<TrialResult> {
    let game = Game::Matrix(m.clone());
    let mut learners = [
        discrete_learner(&cfg.agents[0], &game, 0, agent_seed(seed, 0))?,
        discrete_learner(&cfg.agents[1], &game, 1, agent_seed(seed, 1))?,
    ];
    let (opt1, opt2) = m.global_optimum();
    let s = STATELESS;
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let mut total = 0.0;
        for step in 0..cfg.steps_per_episode {
            let a1 = learners[0].act(s);
            let a2 = learners[1].act(s);
            let out = game.step([Action::Discrete(a1), Action::Discrete(a2)], step, cfg.steps_per_episode)?;
            total += 0.5 * (out.rewards[0] + out.rewards[1]);
            let view = |a_i, a_opp, r| Transition { s, a_i, a_opp, a_opp_model: None, s_next: out.s_next, r, done: out.done };
            learners[0].learn_from(view(a1, a2, out.rewards[0]))?;
            learners[1].learn_from(view(a2, a1, out.rewards[1]))?;
        }
        let p1 = learners[0].policy(s);
        let p2 = learners[1].policy(s);
        let joint: Vec<f64> = p1.iter().flat_map(|x| p2.iter().map(move |y| x * y)).collect();
        episodes.push(DiscreteEpisode {
            episode,
            mean_reward: total / cfg.steps_per_episode as f64,
            joint_opt: p1[opt1] * p2[opt2],
            pi1_opt: p1[opt1],
            pi2_opt: p2[opt2],
            rho1_opt: learners[0].opponent_model(s).map(|r| r[opt2]),
            rho2_opt: learners[1].opponent_model(s).map(|r| r[opt1]),
            freq1_opt: learners[0].opponent_frequencies(s)[opt2],
            freq2_opt: learners[1].opponent_frequencies(s)[opt1],
            joint,
        });
    }
    let converged = episodes.last().is_some_and(|e| e.joint_opt >= cfg.convergence.joint_probability);
    let checkpoints = if cfg.checkpoints { Some([learners[0].checkpoint()?, learners[1].checkpoint()?]) } else { None };
    Ok(TrialResult { index, seed, series: Series::Discrete(episodes), converged, checkpoints })
}

fn run_continuous(cfg: &ExperimentConfig, index: usize, seed: u64) -> Result<TrialResult> {
    let game = cfg.game()?;
    let mut agents = Vec::with_capacity(2);
    for (i, spec) in cfg.agents.iter().enumerate() {
        let LearnerSpec::RommeoAc { config } = spec else {
            return Err(Error::Unsupported(format!("{} needs a discrete game", spec.name())));
        };
        let own = game.action_space(i).bounds()?;
        let opp = game.action_space(1 - i).bounds()?;
        agents.push(AcAgent::new(1, own, opp, config.clone(), agent_seed(seed, i))?);
    }
    let s = STATELESS;
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let (mut total, mut sum1, mut sum2, mut last) = (0.0, 0.0, 0.0, (0.0, 0.0));
        for step in 0..cfg.steps_per_episode {
            let (a1, m1) = agents[0].act(s)?;
            let (a2, m2) = agents[1].act(s)?;
            let out = game.step([Action::Continuous(a1), Action::Continuous(a2)], step, cfg.steps_per_episode)?;
            total += 0.5 * (out.rewards[0] + out.rewards[1]);
            sum1 += a1;
            sum2 += a2;
            last = (a1, a2);
            let view = |a_i, a_opp, model, r| Transition {
                s,
                a_i,
                a_opp,
                a_opp_model: Some(model),
                s_next: out.s_next,
                r,
                done: out.done,
            };
            agents[0].observe(view(a1, a2, m1, out.rewards[0]))?;
            agents[1].observe(view(a2, a1, m2, out.rewards[1]))?;
            agents[0].update()?;
            agents[1].update()?;
        }
        let n = cfg.steps_per_episode as f64;
        let (pi1, rho1) = agents[0].means(s)?;
        let (pi2, rho2) = agents[1].means(s)?;
        episodes.push(ContinuousEpisode {
            episode,
            mean_reward: total / n,
            a1_last: last.0,
            a2_last: last.1,
            a1_mean: sum1 / n,
            a2_mean: sum2 / n,
            pi1_mean: pi1,
            pi2_mean: pi2,
            rho1_mean: rho1,
            rho2_mean: rho2,
            prior1_mean: agents[0].prior_mean(s)?,
            prior2_mean: agents[1].prior_mean(s)?,
        });
    }
    let converged = episodes.last().is_some_and(|e| e.mean_reward >= cfg.convergence.reward);
    let checkpoints = if cfg.checkpoints { Some([agents[0].to_json()?, agents[1].to_json()?]) } else { None };
    Ok(TrialResult { index, seed, series: Series::Continuous(episodes), converged, checkpoints })
}
