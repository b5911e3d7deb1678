//! Sample-based ROMMEO-Q for discrete games.
//!
//! Each agent keeps a tabular `Q(s, a_own, a_opp)`, a target copy, a replay
//! buffer and opponent-action counts. It acts by sampling the marginal
//! `Σ_b π(a|s,b) ρ(b|s)` of the Boltzmann conditional policy and the
//! prior-regularized opponent model, and regresses `Q` toward `r` (terminal)
//! or `r + γ V̄(s')`, where `V̄` is a K-sample importance estimate of the
//! soft value of the target table.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::game::{StateId, Transition};
use crate::math::{log_sum_exp, sample_index};
use crate::soft::{
    extract_opponent_model, extract_policy, marginal_policy, ConditionalPolicyTable, JointQTable,
    OpponentModelTable, OpponentPrior, DEFAULT_PRIOR_SMOOTHING,
};

/// Fixed-capacity FIFO experience store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    entries: VecDeque<T>,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }

    /// `n` distinct entries drawn uniformly. Requires `n <= len`.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<T> {
        assert!(n <= self.entries.len(), "cannot sample {n} of {} entries", self.entries.len());
        rand::seq::index::sample(rng, self.entries.len(), n)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect()
    }
}

/// Opponent-action counts per state; probabilities are count ratios with a
/// uniform fallback for unvisited states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPrior {
    n_states: usize,
    n_opp: usize,
    counts: Vec<u64>,
}

impl EmpiricalPrior {
    pub fn new(n_states: usize, n_opp: usize) -> Self {
        Self { n_states, n_opp, counts: vec![0; n_states * n_opp] }
    }

    pub fn observe(&mut self, s: StateId, a_opp: usize) {
        self.counts[s * self.n_opp + a_opp] += 1;
    }

    pub fn counts(&self, s: StateId) -> &[u64] {
        &self.counts[s * self.n_opp..(s + 1) * self.n_opp]
    }

    pub fn visits(&self, s: StateId) -> u64 {
        self.counts(s).iter().sum()
    }

    pub fn probs(&self, s: StateId) -> Vec<f64> {
        let total = self.visits(s);
        if total == 0 {
            return vec![1.0 / self.n_opp as f64; self.n_opp];
        }
        self.counts(s).iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// The smoothed prior handed to the soft operators.
    pub fn to_prior(&self, smoothing: f64) -> OpponentPrior {
        let probs = (0..self.n_states).flat_map(|s| self.probs(s)).collect();
        OpponentPrior::with_smoothing(self.n_states, self.n_opp, probs, smoothing)
            .expect("count ratios always form a distribution")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Samples per `V̄` estimate.
    pub k_samples: usize,
    /// Train steps between target-table copies.
    pub target_interval: usize,
    /// Act against the empirical opponent frequencies instead of the learned opponent model.
    pub empirical_opponent: bool,
    pub prior_smoothing: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 0.0,
            lr: 0.1,
            buffer_capacity: 1000,
            batch_size: 32,
            k_samples: 30,
            target_interval: 1,
            empirical_opponent: false,
            prior_smoothing: DEFAULT_PRIOR_SMOOTHING,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(0.0..1.0).contains(&self.gamma) {
            return Err(contract("alpha must be positive and gamma in [0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return Err(contract(format!("lr must lie in (0, 1], got {}", self.lr)));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(contract("need 0 < batch_size <= buffer_capacity"));
        }
        if self.k_samples == 0 || self.target_interval == 0 || !(self.prior_smoothing > 0.0) {
            return Err(contract("k_samples, target_interval and prior_smoothing must be positive"));
        }
        Ok(())
    }
}

/// K-sample importance estimate of the soft value of `q_bar` at state `s`:
/// `log (1/K) Σ_k P(b_k) exp(Q̄(s,a_k,b_k)) / (π(a_k|s,b_k) ρ(b_k|s))` with
/// `b_k ∼ ρ`, `a_k ∼ π(·|s,b_k)`. The `α` exponents cancel inside the sum, so
/// the estimate targets the exact soft value when `α = 1`.
pub fn importance_soft_value<R: Rng>(
    q_bar: &JointQTable,
    s: StateId,
    prior: &OpponentPrior,
    pi: &ConditionalPolicyTable,
    rho: &OpponentModelTable,
    k: usize,
    rng: &mut R,
) -> f64 {
    assert!(k >= 1, "need at least one sample");
    let terms: Vec<f64> = (0..k)
        .map(|_| {
            let b = sample_index(rho.row(s), rng.random());
            let a = sample_index(pi.row(s, b), rng.random());
            prior.row(s)[b].ln() + q_bar.get(s, a, b) - pi.prob(s, b, a).ln() - rho.row(s)[b].ln()
        })
        .collect();
    log_sum_exp(terms.iter().copied()) - (k as f64).ln()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QLearner {
    cfg: QConfig,
    q: JointQTable,
    q_target: JointQTable,
    prior: EmpiricalPrior,
    buffer: ReplayBuffer<Transition<usize>>,
    rng: ChaCha8Rng,
    train_steps: u64,
}

impl QLearner {
    pub fn new(n_states: usize, n_own: usize, n_opp: usize, cfg: QConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if n_states == 0 || n_own == 0 || n_opp == 0 {
            return Err(contract("learner needs at least one state and action"));
        }
        let q = JointQTable::zeros(n_states, n_own, n_opp);
        Ok(Self {
            q_target: q.clone(),
            q,
            prior: EmpiricalPrior::new(n_states, n_opp),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            rng,
            train_steps: 0,
        })
    }

    pub fn seeded(n_states: usize, n_own: usize, n_opp: usize, cfg: QConfig, seed: u64) -> Result<Self> {
        Self::new(n_states, n_own, n_opp, cfg, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn config(&self) -> &QConfig {
        &self.cfg
    }

    pub fn q(&self) -> &JointQTable {
        &self.q
    }

    pub fn q_target(&self) -> &JointQTable {
        &self.q_target
    }

    /// Replaces both the online and target tables; used to start from known values.
    pub fn set_q(&mut self, q: JointQTable) -> Result<()> {
        if q.shape() != self.q.shape() {
            return Err(contract("replacement Q table has the wrong shape"));
        }
        q.check_finite()?;
        self.q_target = q.clone();
        self.q = q;
        Ok(())
    }

    pub fn empirical_prior(&self) -> &EmpiricalPrior {
        &self.prior
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<usize>> {
        &self.buffer
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn opponent_prior(&self) -> OpponentPrior {
        self.prior.to_prior(self.cfg.prior_smoothing)
    }

    /// Conditional policy and opponent model implied by the online table.
    pub fn tables(&self) -> (ConditionalPolicyTable, OpponentModelTable) {
        let prior = self.opponent_prior();
        let pi = extract_policy(&self.q, self.cfg.alpha).expect("online table stays finite");
        let rho = if self.cfg.empirical_opponent {
            OpponentModelTable::from(&prior)
        } else {
            extract_opponent_model(&self.q, &prior, self.cfg.alpha).expect("online table stays finite")
        };
        (pi, rho)
    }

    pub fn opponent_model(&self, s: StateId) -> Vec<f64> {
        self.tables().1.row(s).to_vec()
    }

    pub fn marginal_policy(&self, s: StateId) -> Vec<f64> {
        let (pi, rho) = self.tables();
        marginal_policy(&pi, &rho, s)
    }

    pub fn act(&mut self, s: StateId) -> usize {
        let p = self.marginal_policy(s);
        sample_index(&p, self.rng.random())
    }

    pub fn observe(&mut self, t: Transition<usize>) {
        self.prior.observe(t.s, t.a_opp);
        self.buffer.push(t);
    }

    /// `V̄(s_next)` from the target table, sampling from the current tables.
    pub fn estimate_v_bar(&mut self, s_next: StateId, k: usize) -> f64 {
        let prior = self.opponent_prior();
        let (pi, rho) = self.tables();
        importance_soft_value(&self.q_target, s_next, &prior, &pi, &rho, k, &mut self.rng)
    }

    /// One pass of tabular regression steps over `batch`, then a target copy
    /// every `target_interval` calls. Sampling tables are fixed for the batch.
    pub fn train_step(&mut self, batch: &[Transition<usize>]) {
        let needs_bootstrap = batch.iter().any(|t| !t.done);
        let sampling = needs_bootstrap.then(|| (self.opponent_prior(), self.tables()));
        for t in batch {
            let y = match (&sampling, t.done) {
                (Some((prior, (pi, rho))), false) => {
                    let v_bar =
                        importance_soft_value(&self.q_target, t.s_next, prior, pi, rho, self.cfg.k_samples, &mut self.rng);
                    t.r + self.cfg.gamma * v_bar
                }
                _ => t.r,
            };
            let old = self.q.get(t.s, t.a_i, t.a_opp);
            self.q.set(t.s, t.a_i, t.a_opp, old - self.cfg.lr * (old - y));
        }
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.target_interval as u64) {
            self.q_target = self.q.clone();
        }
    }

    /// Samples a minibatch and trains once the buffer holds a full batch.
    pub fn update(&mut self) -> bool {
        if self.buffer.len() < self.cfg.batch_size {
            return false;
        }
        let batch = self.buffer.sample(&mut self.rng, self.cfg.batch_size);
        self.train_step(&batch);
        true
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let learner: Self = serde_json::from_str(json)?;
        learner.cfg.validate()?;
        Ok(learner)
    }
}
