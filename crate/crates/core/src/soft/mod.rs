//! Exact tabular soft value machinery.
//!
//! Agent `i` keeps soft action values `Q(s, a_own, a_opp)` over joint actions
//! and a prior `P(a_opp | s)` over the opponent. From these follow
//!
//! * the soft state value `V(s) = log Σ_b P(b|s) (Σ_a exp(Q(s,a,b)/α))^α`,
//! * the conditional policy `π(a|s,b) ∝ exp(Q(s,a,b)/α)`,
//! * the opponent model `ρ(b|s) = P(b|s) (Σ_a exp(Q(s,a,b)/α))^α / exp(V(s))`,
//!
//! and the soft Bellman operator `(TQ)(s,a,b) = R(s,a,b) + γ E[V(s')]`, a
//! γ-contraction in the sup norm. Everything is evaluated in log space with
//! the max shifted out: climbing-game payoffs alone span `e^-30 .. e^11`.

mod tables;

pub use tables::{
    ConditionalPolicyTable, JointQTable, OpponentModelTable, OpponentPrior, DEFAULT_PRIOR_SMOOTHING,
    NORMALIZATION_TOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::game::MatrixGame;
use crate::math::{entropy, kl_divergence, log_sum_exp, softmax_in_place};

/// How a stage game continues after each joint action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Every step is terminal, so the bootstrap term vanishes and `TQ = R`.
    #[default]
    SingleStep,
    /// The stage repeats forever in the same state and values bootstrap with `γ`.
    Repeated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Dynamics {
    Terminal,
    /// `P(s' | s, a, b)` laid out `[(s, a, b)][s']`.
    Kernel(Vec<f64>),
}

/// A finite game from one agent's point of view: rewards `R(s, a_own, a_opp)`
/// plus the state dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularGame {
    reward: JointQTable,
    dynamics: Dynamics,
}

impl TabularGame {
    /// Stateless game from a payoff matrix indexed `[own][opp]`.
    pub fn stage(reward: &[Vec<f64>], horizon: Horizon) -> Result<Self> {
        let reward = JointQTable::from_matrix(reward)?;
        let dynamics = match horizon {
            Horizon::SingleStep => Dynamics::Terminal,
            Horizon::Repeated => Dynamics::Kernel(vec![1.0; reward.values().len()]),
        };
        Ok(Self { reward, dynamics })
    }

    /// Agent `agent`'s view of a matrix game.
    pub fn from_matrix(game: &MatrixGame, agent: usize, horizon: Horizon) -> Self {
        Self::stage(&game.own_view(agent), horizon).expect("matrix games are validated on construction")
    }

    /// General finite game. `kernel[((s * n_own + a) * n_opp + b) * n_states + s']`
    /// holds the transition probabilities; `None` makes every step terminal.
    pub fn with_kernel(reward: JointQTable, kernel: Option<Vec<f64>>) -> Result<Self> {
        let dynamics = match kernel {
            None => Dynamics::Terminal,
            Some(k) => {
                let n_states = reward.n_states();
                if k.len() != reward.values().len() * n_states {
                    return Err(contract("transition kernel shape does not match the reward table"));
                }
                if k.chunks(n_states).any(|row| !crate::math::is_distribution(row, NORMALIZATION_TOL)) {
                    return Err(contract("transition kernel rows must be distributions"));
                }
                Dynamics::Kernel(k)
            }
        };
        Ok(Self { reward, dynamics })
    }

    pub fn reward(&self) -> &JointQTable {
        &self.reward
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.reward.shape()
    }

    /// `E[f(s') | s, a, b]`, or `None` when the transition is terminal.
    fn expected_next(&self, idx: usize, f: &[f64]) -> Option<f64> {
        match &self.dynamics {
            Dynamics::Terminal => None,
            Dynamics::Kernel(k) => {
                let n = f.len();
                Some(k[idx * n..(idx + 1) * n].iter().zip(f).map(|(p, v)| p * v).sum())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftConfig {
    /// Entropy weight α > 0.
    pub alpha: f64,
    /// Discount γ ∈ [0, 1).
    pub gamma: f64,
    /// Sup-norm convergence tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SoftConfig {
    fn default() -> Self {
        Self { alpha: 1.0, gamma: 0.0, tol: 1e-10, max_iter: 100_000 }
    }
}

impl SoftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(contract(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(contract("tol must be positive and max_iter nonzero"));
        }
        Ok(())
    }
}

/// Converged soft values with the policy and opponent model they induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftSolution {
    pub q_star: JointQTable,
    pub v_star: Vec<f64>,
    pub pi_star: ConditionalPolicyTable,
    pub rho_star: OpponentModelTable,
    /// Operator applications before the confirming sweep that found the change within `tol`.
    pub iterations: usize,
    /// Sup-norm change of the confirming sweep.
    pub residual: f64,
}

impl SoftSolution {
    /// Marginal own-action distribution `Σ_b π(a|s,b) ρ(b|s)`.
    pub fn marginal_policy(&self, s: usize) -> Vec<f64> {
        marginal_policy(&self.pi_star, &self.rho_star, s)
    }

    /// The joint action `(a_own, a_opp)` maximizing `π(a|s,b) ρ(b|s)`.
    pub fn joint_argmax(&self, s: usize) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_p = f64::NEG_INFINITY;
        for b in 0..self.rho_star.n_opp() {
            for a in 0..self.pi_star.n_own() {
                let p = self.pi_star.prob(s, b, a) * self.rho_star.row(s)[b];
                if p > best_p {
                    best_p = p;
                    best = (a, b);
                }
            }
        }
        best
    }
}

fn check_shapes(q: &JointQTable, prior: &OpponentPrior) -> Result<()> {
    if q.n_states() != prior.n_states() || q.n_opp() != prior.n_opp() {
        return Err(contract(format!(
            "Q table {:?} does not match prior over {} states x {} opponent actions",
            q.shape(),
            prior.n_states(),
            prior.n_opp()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(contract(format!("alpha must be positive, got {alpha}")))
    }
}

/// `α · log Σ_a exp(Q(s,a,b)/α)` for each opponent action `b`.
fn inner_soft_max(q: &JointQTable, s: usize, alpha: f64) -> Vec<f64> {
    (0..q.n_opp())
        .map(|b| alpha * log_sum_exp((0..q.n_own()).map(|a| q.get(s, a, b) / alpha)))
        .collect()
}

fn soft_value_unchecked(q: &JointQTable, prior: &OpponentPrior, alpha: f64) -> Vec<f64> {
    (0..q.n_states())
        .map(|s| {
            let inner = inner_soft_max(q, s, alpha);
            log_sum_exp(prior.row(s).iter().zip(&inner).map(|(p, l)| p.ln() + l))
        })
        .collect()
}

/// Soft state value for every state.
pub fn soft_value(q: &JointQTable, prior: &OpponentPrior, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    prior.validate()?;
    check_shapes(q, prior)?;
    Ok(soft_value_unchecked(q, prior, alpha))
}

/// Boltzmann conditional policy `π(a | s, b) ∝ exp(Q(s,a,b)/α)`.
pub fn extract_policy(q: &JointQTable, alpha: f64) -> Result<ConditionalPolicyTable> {
    check_alpha(alpha)?;
    q.check_finite()?;
    let (n_states, n_own, n_opp) = q.shape();
    let mut probs = Vec::with_capacity(n_states * n_opp * n_own);
    let mut row = vec![0.0; n_own];
    for s in 0..n_states {
        for b in 0..n_opp {
            for (a, x) in row.iter_mut().enumerate() {
                *x = q.get(s, a, b) / alpha;
            }
            softmax_in_place(&mut row);
            probs.extend_from_slice(&row);
        }
    }
    Ok(ConditionalPolicyTable::from_raw(n_states, n_opp, n_own, probs))
}

/// Opponent model `ρ(b|s) ∝ P(b|s) (Σ_a exp(Q(s,a,b)/α))^α`.
pub fn extract_opponent_model(q: &JointQTable, prior: &OpponentPrior, alpha: f64) -> Result<OpponentModelTable> {
    check_alpha(alpha)?;
    prior.validate()?;
    check_shapes(q, prior)?;
    q.check_finite()?;
    let mut probs = Vec::with_capacity(q.n_states() * q.n_opp());
    for s in 0..q.n_states() {
        let mut logits: Vec<f64> =
            inner_soft_max(q, s, alpha).iter().zip(prior.row(s)).map(|(l, p)| p.ln() + l).collect();
        softmax_in_place(&mut logits);
        probs.extend(logits);
    }
    Ok(OpponentModelTable::from_raw(q.n_states(), q.n_opp(), probs))
}

/// Marginal own-action distribution `Σ_b π(a|s,b) ρ(b|s)`.
pub fn marginal_policy(pi: &ConditionalPolicyTable, rho: &OpponentModelTable, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; pi.n_own()];
    for (b, &rb) in rho.row(s).iter().enumerate() {
        for (o, &p) in out.iter_mut().zip(pi.row(s, b)) {
            *o += rb * p;
        }
    }
    out
}

fn check_game(game: &TabularGame, q: &JointQTable) -> Result<()> {
    if game.shape() != q.shape() {
        return Err(contract(format!("game shape {:?} does not match Q shape {:?}", game.shape(), q.shape())));
    }
    Ok(())
}

fn apply_bootstrap(game: &TabularGame, next_value: &[f64], gamma: f64) -> JointQTable {
    let mut out = game.reward.clone();
    for (idx, v) in out.values_mut().iter_mut().enumerate() {
        if let Some(ev) = game.expected_next(idx, next_value) {
            *v += gamma * ev;
        }
    }
    out
}

/// One application of the soft Bellman operator.
pub fn bellman_operator(q: &JointQTable, game: &TabularGame, prior: &OpponentPrior, cfg: &SoftConfig) -> Result<JointQTable> {
    cfg.validate()?;
    check_game(game, q)?;
    let v = soft_value(q, prior, cfg.alpha)?;
    Ok(apply_bootstrap(game, &v, cfg.gamma))
}

/// Iterates the soft Bellman operator from `Q = 0` until the sup-norm change
/// is within `cfg.tol`.
pub fn solve_fixed_point(game: &TabularGame, prior: &OpponentPrior, cfg: &SoftConfig) -> Result<SoftSolution> {
    cfg.validate()?;
    let (n_states, n_own, n_opp) = game.shape();
    let mut q = JointQTable::zeros(n_states, n_own, n_opp);
    check_shapes(&q, prior)?;
    prior.validate()?;
    let mut residual = f64::INFINITY;
    for k in 0..cfg.max_iter {
        let v = soft_value_unchecked(&q, prior, cfg.alpha);
        let next = apply_bootstrap(game, &v, cfg.gamma);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= cfg.tol {
            let v_star = soft_value_unchecked(&q, prior, cfg.alpha);
            let pi_star = extract_policy(&q, cfg.alpha)?;
            let rho_star = extract_opponent_model(&q, prior, cfg.alpha)?;
            return Ok(SoftSolution { q_star: q, v_star, pi_star, rho_star, iterations: k, residual });
        }
    }
    Err(Error::NotConverged { iterations: cfg.max_iter, residual })
}

fn check_pair(q_shape: (usize, usize, usize), pi: &ConditionalPolicyTable, rho: &OpponentModelTable) -> Result<()> {
    let (n_states, n_own, n_opp) = q_shape;
    if (pi.n_states(), pi.n_own(), pi.n_opp()) != (n_states, n_own, n_opp)
        || (rho.n_states(), rho.n_opp()) != (n_states, n_opp)
    {
        return Err(contract("policy / opponent model shapes do not match the game"));
    }
    pi.validate()?;
    rho.validate()
}

/// Per-state soft return of the pair under a given `Q`:
/// `E_{b∼ρ}[α H(π(·|s,b)) + E_{a∼π} Q(s,a,b)] − KL(ρ(·|s) || P(·|s))`.
pub fn pair_soft_value(
    q: &JointQTable,
    pi: &ConditionalPolicyTable,
    rho: &OpponentModelTable,
    prior: &OpponentPrior,
    alpha: f64,
) -> Vec<f64> {
    (0..q.n_states())
        .map(|s| {
            let rho_s = rho.row(s);
            let inner: f64 = rho_s
                .iter()
                .enumerate()
                .map(|(b, &rb)| {
                    if rb == 0.0 {
                        return 0.0;
                    }
                    let row = pi.row(s, b);
                    let eq: f64 = row.iter().enumerate().map(|(a, &p)| p * q.get(s, a, b)).sum();
                    rb * (alpha * entropy(row) + eq)
                })
                .sum();
            inner - kl_divergence(rho_s, prior.row(s))
        })
        .collect()
}

/// Soft action values `Q^{π,ρ}` of a fixed policy / opponent-model pair, by
/// iterative policy evaluation. Exact after one sweep for terminal games.
pub fn evaluate_policy_pair(
    game: &TabularGame,
    pi: &ConditionalPolicyTable,
    rho: &OpponentModelTable,
    prior: &OpponentPrior,
    cfg: &SoftConfig,
) -> Result<JointQTable> {
    cfg.validate()?;
    prior.validate()?;
    check_pair(game.shape(), pi, rho)?;
    check_shapes(&game.reward, prior)?;
    if matches!(game.dynamics, Dynamics::Terminal) || cfg.gamma == 0.0 {
        return Ok(game.reward.clone());
    }
    let (n_states, n_own, n_opp) = game.shape();
    let mut q = JointQTable::zeros(n_states, n_own, n_opp);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let w = pair_soft_value(&q, pi, rho, prior, cfg.alpha);
        let next = apply_bootstrap(game, &w, cfg.gamma);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= cfg.tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged { iterations: cfg.max_iter, residual })
}

/// Policy improvement: `π̃(·|s,b) ∝ exp(Q(s,·,b)/α)`.
pub fn policy_improvement_step(q: &JointQTable, alpha: f64) -> Result<ConditionalPolicyTable> {
    extract_policy(q, alpha)
}

/// Opponent-model improvement:
/// `ρ̃(b|s) ∝ exp(Σ_a π(a|s,b) Q(s,a,b) + α H(π(·|s,b)) + log P(b|s))`.
pub fn opponent_improvement_step(
    q: &JointQTable,
    pi: &ConditionalPolicyTable,
    prior: &OpponentPrior,
    alpha: f64,
) -> Result<OpponentModelTable> {
    check_alpha(alpha)?;
    prior.validate()?;
    check_shapes(q, prior)?;
    if (pi.n_states(), pi.n_own(), pi.n_opp()) != q.shape() {
        return Err(contract("policy shape does not match the Q table"));
    }
    pi.validate()?;
    let mut probs = Vec::with_capacity(q.n_states() * q.n_opp());
    for s in 0..q.n_states() {
        let mut logits: Vec<f64> = (0..q.n_opp())
            .map(|b| {
                let row = pi.row(s, b);
                let eq: f64 = row.iter().enumerate().map(|(a, &p)| p * q.get(s, a, b)).sum();
                eq + alpha * entropy(row) + prior.row(s)[b].ln()
            })
            .collect();
        softmax_in_place(&mut logits);
        probs.extend(logits);
    }
    Ok(OpponentModelTable::from_raw(q.n_states(), q.n_opp(), probs))
}

/// The regularized max-entropy objective of a pair: expected reward plus
/// α-weighted policy entropy minus `KL(ρ || P)`, accumulated with discount `γ`
/// for repeated games and averaged uniformly over start states.
pub fn rommeo_objective(
    game: &TabularGame,
    pi: &ConditionalPolicyTable,
    rho: &OpponentModelTable,
    prior: &OpponentPrior,
    cfg: &SoftConfig,
) -> Result<f64> {
    let q = evaluate_policy_pair(game, pi, rho, prior, cfg)?;
    let w = pair_soft_value(&q, pi, rho, prior, cfg.alpha);
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}
