//! Exact soft solution of a discrete game, for the `solve` subcommand.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::soft::{solve_fixed_point, Horizon, OpponentPrior, SoftConfig, SoftSolution, TabularGame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub game: String,
    pub agent: usize,
    pub config: SoftConfig,
    pub solution: SoftSolution,
    pub joint_argmax: (usize, usize),
}

/// Solves agent `agent`'s view of `game_id` under a uniform prior. With
/// `gamma > 0` the stage game repeats forever; with `gamma = 0` it is a
/// single step.
pub fn solve_game(game_id: &str, agent: usize, cfg: &SoftConfig) -> Result<SolveReport> {
    let Game::Matrix(m) = Game::from_id(game_id)? else {
        return Err(Error::Unsupported(format!("{game_id} is not a discrete game")));
    };
    if agent > 1 {
        return Err(Error::Config(format!("agent must be 0 or 1, got {agent}")));
    }
    let horizon = if cfg.gamma > 0.0 { Horizon::Repeated } else { Horizon::SingleStep };
    let tabular = TabularGame::from_matrix(&m, agent, horizon);
    let n_opp = m.n_actions()[1 - agent];
    let solution = solve_fixed_point(&tabular, &OpponentPrior::uniform(1, n_opp), cfg)?;
    let joint_argmax = solution.joint_argmax(0);
    Ok(SolveReport { game: game_id.into(), agent, config: cfg.clone(), solution, joint_argmax })
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:>10.5}")).collect::<Vec<_>>().join(" ")
}

impl SolveReport {
    /// Human-readable tables of `Q*`, `V*`, `π*`, `ρ*` and the joint argmax.
    pub fn render(&self) -> String {
        let sol = &self.solution;
        let (_, n_own, n_opp) = sol.q_star.shape();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "game {} (agent {}), alpha {}, gamma {}: converged in {} iterations, residual {:e}",
            self.game, self.agent, self.config.alpha, self.config.gamma, sol.iterations, sol.residual
        );
        let _ = writeln!(s, "\nQ*(a, b)  rows: own action, columns: opponent action");
        for a in 0..n_own {
            let _ = writeln!(s, "  a={a} {}", row((0..n_opp).map(|b| sol.q_star.get(0, a, b))));
        }
        let _ = writeln!(s, "\nV* {:.6}", sol.v_star[0]);
        let _ = writeln!(s, "\npi*(a | b)  rows: opponent action b");
        for b in 0..n_opp {
            let _ = writeln!(s, "  b={b} {}", row(sol.pi_star.row(0, b).iter().copied()));
        }
        let _ = writeln!(s, "\nrho*(b)  {}", row(sol.rho_star.row(0).iter().copied()));
        let (a, b) = self.joint_argmax;
        let _ = writeln!(s, "\njoint argmax (own, opponent) = ({a}, {b})");
        s
    }
}
