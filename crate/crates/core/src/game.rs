//! Two-agent games: the iterated climbing game and the Max-of-Two-Quadratics
//! differential game.
//!
//! Both benchmarks are stateless repeated stage games, so every step starts
//! and ends in the sentinel state [`STATELESS`]. Episode boundaries are set by
//! the caller through `steps_per_episode`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateId = usize;

/// The single state of a stateless stage game.
pub const STATELESS: StateId = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Box { low: f64, high: f64, dim: usize },
}

impl ActionSpace {
    pub fn discrete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Contract(format!("discrete action space needs n >= 2, got {n}")));
        }
        Ok(ActionSpace::Discrete { n })
    }

    pub fn bounded(low: f64, high: f64, dim: usize) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) || dim == 0 {
            return Err(Error::Contract(format!("invalid box [{low}, {high}]^{dim}")));
        }
        Ok(ActionSpace::Box { low, high, dim })
    }

    /// `(low, high)` of a box space.
    pub fn bounds(&self) -> Result<(f64, f64)> {
        match self {
            ActionSpace::Box { low, high, .. } => Ok((*low, *high)),
            ActionSpace::Discrete { .. } => Err(Error::Unsupported("discrete action spaces have no bounds".into())),
        }
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => a < n,
            (ActionSpace::Box { low, high, dim: 1 }, Action::Continuous(x)) => {
                x.is_finite() && *x >= *low && *x <= *high
            }
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

/// One experience tuple as seen by a single agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<A> {
    pub s: StateId,
    pub a_i: A,
    /// The opponent's real action.
    pub a_opp: A,
    /// The opponent action sampled from this agent's own opponent model, when it has one.
    pub a_opp_model: Option<A>,
    pub s_next: StateId,
    pub r: f64,
    pub done: bool,
}

/// A two-player matrix game. `payoff` is laid out as `[agent][a1][a2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    n_actions: [usize; 2],
    payoff: Vec<f64>,
    shared: bool,
}

impl MatrixGame {
    /// `payoffs[k]` is agent k's payoff matrix indexed `[a1][a2]`.
    pub fn new(payoffs: [Vec<Vec<f64>>; 2]) -> Result<Self> {
        let rows = payoffs[0].len();
        let cols = payoffs[0].first().map_or(0, Vec::len);
        if rows < 2 || cols < 2 {
            return Err(Error::Contract("matrix games need at least 2 actions per agent".into()));
        }
        let mut payoff = Vec::with_capacity(2 * rows * cols);
        for matrix in &payoffs {
            if matrix.len() != rows || matrix.iter().any(|row| row.len() != cols) {
                return Err(Error::Contract("payoff matrices must share one rectangular shape".into()));
            }
            for row in matrix {
                for &v in row {
                    if !v.is_finite() {
                        return Err(Error::Contract("payoffs must be finite".into()));
                    }
                    payoff.push(v);
                }
            }
        }
        let shared = payoff[..rows * cols] == payoff[rows * cols..];
        Ok(Self { n_actions: [rows, cols], payoff, shared })
    }

    /// Shared-reward game from a single matrix.
    pub fn cooperative(matrix: Vec<Vec<f64>>) -> Result<Self> {
        Self::new([matrix.clone(), matrix])
    }

    pub fn n_actions(&self) -> [usize; 2] {
        self.n_actions
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn action_space(&self, agent: usize) -> ActionSpace {
        ActionSpace::Discrete { n: self.n_actions[agent] }
    }

    pub fn payoff(&self, agent: usize, a1: usize, a2: usize) -> f64 {
        let [rows, cols] = self.n_actions;
        self.payoff[(agent * rows + a1) * cols + a2]
    }

    /// Agent `agent`'s payoff indexed `[own][opponent]`, i.e. transposed for the second agent.
    pub fn own_view(&self, agent: usize) -> Vec<Vec<f64>> {
        let [n1, n2] = self.n_actions;
        if agent == 0 {
            (0..n1).map(|a| (0..n2).map(|b| self.payoff(0, a, b)).collect()).collect()
        } else {
            (0..n2).map(|b| (0..n1).map(|a| self.payoff(1, a, b)).collect()).collect()
        }
    }

    /// The joint action with the highest total payoff (first in row-major order on ties).
    pub fn global_optimum(&self) -> (usize, usize) {
        let [n1, n2] = self.n_actions;
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for a in 0..n1 {
            for b in 0..n2 {
                let v = self.payoff(0, a, b) + self.payoff(1, a, b);
                if v > best_v {
                    best_v = v;
                    best = (a, b);
                }
            }
        }
        best
    }

    pub fn rewards(&self, a1: usize, a2: usize) -> Result<[f64; 2]> {
        let [n1, n2] = self.n_actions;
        if a1 >= n1 || a2 >= n2 {
            return Err(Error::Domain(format!("joint action ({a1}, {a2}) outside {n1}x{n2} game")));
        }
        Ok([self.payoff(0, a1, a2), self.payoff(1, a1, a2)])
    }
}

/// Climbing game with the shared (C, C) payoff of 5.
pub fn climbing_game() -> MatrixGame {
    climbing_game_variant(false)
}

/// `printed_cc = true` uses the asymmetric (5, 3) cell for (C, C) instead of the shared 5.
pub fn climbing_game_variant(printed_cc: bool) -> MatrixGame {
    let first = vec![
        vec![11.0, -30.0, 0.0],
        vec![-30.0, 7.0, 6.0],
        vec![0.0, 0.0, 5.0],
    ];
    let mut second = first.clone();
    if printed_cc {
        second[2][2] = 3.0;
    }
    MatrixGame::new([first, second]).expect("static payoff table is valid")
}

/// Reward of the Max-of-Two-Quadratics game; both agents receive this value.
pub fn max_two_quadratics_reward(a1: f64, a2: f64) -> Result<f64> {
    for a in [a1, a2] {
        if !(a.is_finite() && (-10.0..=10.0).contains(&a)) {
            return Err(Error::Domain(format!("action {a} outside [-10, 10]")));
        }
    }
    Ok(max_two_quadratics_unchecked(a1, a2))
}

fn max_two_quadratics_unchecked(a1: f64, a2: f64) -> f64 {
    let f1 = 0.8 * (-((a1 + 5.0) / 3.0).powi(2) - ((a2 + 5.0) / 3.0).powi(2));
    let f2 = 1.0 * (-(a1 - 5.0).powi(2) - (a2 - 5.0).powi(2)) + 10.0;
    f1.max(f2)
}

/// A two-player game with one-dimensional box actions and a shared reward.
#[derive(Clone, Debug)]
pub struct DifferentialGame {
    pub action_space: ActionSpace,
    reward: fn(f64, f64) -> f64,
}

impl DifferentialGame {
    pub fn bounds(&self) -> (f64, f64) {
        match self.action_space {
            ActionSpace::Box { low, high, .. } => (low, high),
            ActionSpace::Discrete { .. } => unreachable!("differential games have box actions"),
        }
    }

    pub fn reward(&self, a1: f64, a2: f64) -> Result<f64> {
        let joint = [Action::Continuous(a1), Action::Continuous(a2)];
        if !joint.iter().all(|a| self.action_space.contains(a)) {
            return Err(Error::Domain(format!("joint action ({a1}, {a2}) outside the action box")));
        }
        Ok((self.reward)(a1, a2))
    }
}

pub fn max_two_quadratics() -> DifferentialGame {
    DifferentialGame {
        action_space: ActionSpace::Box { low: -10.0, high: 10.0, dim: 1 },
        reward: max_two_quadratics_unchecked,
    }
}

#[derive(Clone, Debug)]
pub enum Game {
    Matrix(MatrixGame),
    Differential(DifferentialGame),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub s_next: StateId,
    pub rewards: [f64; 2],
    pub done: bool,
}

impl Game {
    /// Looks a benchmark up by its config id.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "climbing" => Ok(Game::Matrix(climbing_game())),
            "climbing-printed" => Ok(Game::Matrix(climbing_game_variant(true))),
            "max-two-quadratics" => Ok(Game::Differential(max_two_quadratics())),
            other => Err(Error::Config(format!(
                "unknown game id `{other}` (expected climbing, climbing-printed or max-two-quadratics)"
            ))),
        }
    }

    pub fn action_space(&self, agent: usize) -> ActionSpace {
        match self {
            Game::Matrix(g) => g.action_space(agent),
            Game::Differential(g) => g.action_space.clone(),
        }
    }

    /// Plays one stage. `step_index` is zero-based within the episode; the
    /// episode ends after `steps_per_episode` stages.
    pub fn step(&self, joint: [Action; 2], step_index: usize, steps_per_episode: usize) -> Result<StepOutcome> {
        if steps_per_episode == 0 || step_index >= steps_per_episode {
            return Err(Error::Contract(format!(
                "step {step_index} outside an episode of {steps_per_episode} steps"
            )));
        }
        let rewards = match (self, joint) {
            (Game::Matrix(g), [Action::Discrete(a1), Action::Discrete(a2)]) => g.rewards(a1, a2)?,
            (Game::Differential(g), [Action::Continuous(a1), Action::Continuous(a2)]) => {
                let r = g.reward(a1, a2)?;
                [r, r]
            }
            _ => return Err(Error::Domain("action kind does not match the game".into())),
        };
        Ok(StepOutcome { s_next: STATELESS, rewards, done: step_index + 1 == steps_per_episode })
    }
}
