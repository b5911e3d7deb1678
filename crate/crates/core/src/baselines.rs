//! Discrete-action baselines for matrix games, plus a common learner trait
//! that the tabular ROMMEO learner also implements.
//!
//! * JAL: joint-action Q values against empirical opponent frequencies, ε-greedy best response.
//! * WoLF-PHC: policy hill climbing with a small step when winning and a large one when losing.
//! * FMQ: independent Q values boosted by `c · freq(max reward) · max reward`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::game::{Game, StateId, Transition};
use crate::math::sample_index;
use crate::rommeo_q::{EmpiricalPrior, QConfig, QLearner};

/// A self-play participant in a discrete game.
pub trait DiscreteLearner: Send {
    fn act(&mut self, s: StateId) -> usize;

    /// Records one transition and performs this learner's update for it.
    fn learn_from(&mut self, t: Transition<usize>) -> Result<()>;

    /// The distribution `act` currently samples from.
    fn policy(&self, s: StateId) -> Vec<f64>;

    /// The learner's model of the opponent, if it keeps one.
    fn opponent_model(&self, s: StateId) -> Option<Vec<f64>>;

    /// Observed frequencies of the opponent's actions.
    fn opponent_frequencies(&self, s: StateId) -> Vec<f64>;

    /// Full learner state as JSON.
    fn checkpoint(&self) -> Result<String>;
}

impl DiscreteLearner for QLearner {
    fn act(&mut self, s: StateId) -> usize {
        QLearner::act(self, s)
    }

    fn learn_from(&mut self, t: Transition<usize>) -> Result<()> {
        self.observe(t);
        self.update();
        Ok(())
    }

    fn policy(&self, s: StateId) -> Vec<f64> {
        self.marginal_policy(s)
    }

    fn opponent_model(&self, s: StateId) -> Option<Vec<f64>> {
        Some(QLearner::opponent_model(self, s))
    }

    fn opponent_frequencies(&self, s: StateId) -> Vec<f64> {
        self.empirical_prior().probs(s)
    }

    fn checkpoint(&self) -> Result<String> {
        self.to_json()
    }
}

/// ROMMEO-Q acting against the empirical opponent frequencies instead of its
/// learned opponent model.
pub fn rommeo_q_emp(n_states: usize, n_own: usize, n_opp: usize, cfg: QConfig, seed: u64) -> Result<QLearner> {
    QLearner::seeded(n_states, n_own, n_opp, QConfig { empirical_opponent: true, ..cfg }, seed)
}

/// `ε_t = max(floor, start · decay^t)`, with `t` counting learning steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, decay: 0.95, floor: 0.01 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, t: u64) -> f64 {
        (self.start * self.decay.powf(t as f64)).max(self.floor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Jal,
    WolfPhc,
    Fmq,
    RommeoQEmp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epsilon: EpsilonSchedule,
    pub lr: f64,
    pub gamma: f64,
    /// FMQ bonus weight.
    pub fmq_c: f64,
    /// WoLF step when winning.
    pub delta_win: f64,
    /// WoLF step when losing.
    pub delta_lose: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { epsilon: EpsilonSchedule::default(), lr: 0.1, gamma: 0.0, fmq_c: 10.0, delta_win: 0.05, delta_lose: 0.2 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.epsilon;
        if ![e.start, e.floor].iter().all(|x| (0.0..=1.0).contains(x)) || !(0.0..=1.0).contains(&e.decay) {
            return Err(contract("epsilon schedule values must lie in [0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) || !(0.0..1.0).contains(&self.gamma) {
            return Err(contract("need lr in (0, 1] and gamma in [0, 1)"));
        }
        if !(self.fmq_c >= 0.0) {
            return Err(contract("FMQ weight must be non-negative"));
        }
        if !(self.delta_lose > self.delta_win && self.delta_win > 0.0) {
            return Err(contract("WoLF steps need delta_lose > delta_win > 0"));
        }
        Ok(())
    }
}

/// Builds a baseline for one seat of a discrete game.
pub fn build(
    kind: BaselineKind,
    cfg: &BaselineConfig,
    game: &Game,
    agent: usize,
    seed: u64,
) -> Result<Box<dyn DiscreteLearner>> {
    let Game::Matrix(m) = game else {
        return Err(Error::Unsupported(format!("{kind:?} needs a discrete game")));
    };
    let n = m.n_actions();
    let (own, opp) = (n[agent], n[1 - agent]);
    Ok(match kind {
        BaselineKind::Jal => Box::new(Jal::new(1, own, opp, cfg.clone(), seed)?),
        BaselineKind::WolfPhc => Box::new(WolfPhc::new(1, own, opp, cfg.clone(), seed)?),
        BaselineKind::Fmq => Box::new(Fmq::new(1, own, opp, cfg.clone(), seed)?),
        BaselineKind::RommeoQEmp => {
            Box::new(rommeo_q_emp(1, own, opp, QConfig { lr: cfg.lr, gamma: cfg.gamma, ..QConfig::default() }, seed)?)
        }
    })
}

fn check_shape(n_states: usize, n_own: usize, n_opp: usize) -> Result<()> {
    if n_states == 0 || n_own == 0 || n_opp == 0 {
        return Err(contract("learner needs at least one state and action"));
    }
    Ok(())
}

/// Index of the largest value, ties broken uniformly at random.
fn argmax_random_tie<R: Rng>(values: &[f64], rng: &mut R) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// Greedy distribution that splits mass evenly over tied maxima, mixed with uniform ε.
fn epsilon_greedy(values: &[f64], eps: f64) -> Vec<f64> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_best = values.iter().filter(|&&v| v == best).count() as f64;
    let n = values.len() as f64;
    values.iter().map(|&v| eps / n + if v == best { (1.0 - eps) / n_best } else { 0.0 }).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Jal {
    cfg: BaselineConfig,
    n_own: usize,
    n_opp: usize,
    /// `q[(s * n_own + a) * n_opp + b]`.
    q: Vec<f64>,
    freq: EmpiricalPrior,
    rng: ChaCha8Rng,
    t: u64,
}

impl Jal {
    pub fn new(n_states: usize, n_own: usize, n_opp: usize, cfg: BaselineConfig, seed: u64) -> Result<Self> {
        check_shape(n_states, n_own, n_opp)?;
        cfg.validate()?;
        Ok(Self {
            cfg,
            n_own,
            n_opp,
            q: vec![0.0; n_states * n_own * n_opp],
            freq: EmpiricalPrior::new(n_states, n_opp),
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }

    /// Expected joint value of each own action under the empirical opponent frequencies.
    pub fn action_values(&self, s: StateId) -> Vec<f64> {
        let f = self.freq.probs(s);
        (0..self.n_own)
            .map(|a| (0..self.n_opp).map(|b| f[b] * self.q[(s * self.n_own + a) * self.n_opp + b]).sum())
            .collect()
    }
}

impl DiscreteLearner for Jal {
    fn act(&mut self, s: StateId) -> usize {
        let eps = self.cfg.epsilon.at(self.t);
        if self.rng.random::<f64>() < eps {
            self.rng.random_range(0..self.n_own)
        } else {
            let v = self.action_values(s);
            argmax_random_tie(&v, &mut self.rng)
        }
    }

    fn learn_from(&mut self, t: Transition<usize>) -> Result<()> {
        self.freq.observe(t.s, t.a_opp);
        let next = if t.done { 0.0 } else { self.action_values(t.s_next).into_iter().fold(f64::NEG_INFINITY, f64::max) };
        let i = (t.s * self.n_own + t.a_i) * self.n_opp + t.a_opp;
        self.q[i] += self.cfg.lr * (t.r + self.cfg.gamma * next - self.q[i]);
        self.t += 1;
        Ok(())
    }

    fn policy(&self, s: StateId) -> Vec<f64> {
        epsilon_greedy(&self.action_values(s), self.cfg.epsilon.at(self.t))
    }

    fn opponent_model(&self, s: StateId) -> Option<Vec<f64>> {
        Some(self.freq.probs(s))
    }

    fn opponent_frequencies(&self, s: StateId) -> Vec<f64> {
        self.freq.probs(s)
    }

    fn checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WolfPhc {
    cfg: BaselineConfig,
    n_own: usize,
    q: Vec<f64>,
    pi: Vec<f64>,
    avg_pi: Vec<f64>,
    visits: Vec<u64>,
    freq: EmpiricalPrior,
    rng: ChaCha8Rng,
    t: u64,
}

impl WolfPhc {
    pub fn new(n_states: usize, n_own: usize, n_opp: usize, cfg: BaselineConfig, seed: u64) -> Result<Self> {
        check_shape(n_states, n_own, n_opp)?;
        cfg.validate()?;
        let uniform = vec![1.0 / n_own as f64; n_states * n_own];
        Ok(Self {
            cfg,
            n_own,
            q: vec![0.0; n_states * n_own],
            pi: uniform.clone(),
            avg_pi: uniform,
            visits: vec![0; n_states],
            freq: EmpiricalPrior::new(n_states, n_opp),
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }

    fn row(&self, s: StateId) -> std::ops::Range<usize> {
        s * self.n_own..(s + 1) * self.n_own
    }

    /// The hill-climbing policy before ε mixing.
    pub fn base_policy(&self, s: StateId) -> &[f64] {
        &self.pi[self.row(s)]
    }

    pub fn average_policy(&self, s: StateId) -> &[f64] {
        &self.avg_pi[self.row(s)]
    }
}

impl DiscreteLearner for WolfPhc {
    fn act(&mut self, s: StateId) -> usize {
        let p = self.policy(s);
        sample_index(&p, self.rng.random())
    }

    fn learn_from(&mut self, t: Transition<usize>) -> Result<()> {
        self.freq.observe(t.s, t.a_opp);
        let n = self.n_own;
        let next = if t.done { 0.0 } else { self.q[self.row(t.s_next)].iter().copied().fold(f64::NEG_INFINITY, f64::max) };
        let r = self.row(t.s);
        let i = r.start + t.a_i;
        self.q[i] += self.cfg.lr * (t.r + self.cfg.gamma * next - self.q[i]);

        self.visits[t.s] += 1;
        let c = self.visits[t.s] as f64;
        for k in r.clone() {
            self.avg_pi[k] += (self.pi[k] - self.avg_pi[k]) / c;
        }
        let (q, pi, avg) = (&self.q[r.clone()], &self.pi[r.clone()], &self.avg_pi[r.clone()]);
        let value = |p: &[f64]| p.iter().zip(q).map(|(p, q)| p * q).sum::<f64>();
        let delta = if value(pi) > value(avg) { self.cfg.delta_win } else { self.cfg.delta_lose };
        let best = argmax_random_tie(q, &mut self.rng);
        if n > 1 {
            let mut moved = 0.0;
            for a in (0..n).filter(|&a| a != best) {
                let step = self.pi[r.start + a].min(delta / (n - 1) as f64);
                self.pi[r.start + a] -= step;
                moved += step;
            }
            self.pi[r.start + best] += moved;
            // Re-normalize to keep rounding drift off the simplex.
            let z: f64 = self.pi[r.clone()].iter().sum();
            self.pi[r].iter_mut().for_each(|p| *p /= z);
        }
        self.t += 1;
        Ok(())
    }

    fn policy(&self, s: StateId) -> Vec<f64> {
        let eps = self.cfg.epsilon.at(self.t);
        let n = self.n_own as f64;
        self.base_policy(s).iter().map(|p| (1.0 - eps) * p + eps / n).collect()
    }

    fn opponent_model(&self, _s: StateId) -> Option<Vec<f64>> {
        None
    }

    fn opponent_frequencies(&self, s: StateId) -> Vec<f64> {
        self.freq.probs(s)
    }

    fn checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fmq {
    cfg: BaselineConfig,
    n_own: usize,
    q: Vec<f64>,
    max_reward: Vec<f64>,
    max_count: Vec<u64>,
    count: Vec<u64>,
    freq: EmpiricalPrior,
    rng: ChaCha8Rng,
    t: u64,
}

impl Fmq {
    pub fn new(n_states: usize, n_own: usize, n_opp: usize, cfg: BaselineConfig, seed: u64) -> Result<Self> {
        check_shape(n_states, n_own, n_opp)?;
        cfg.validate()?;
        let n = n_states * n_own;
        Ok(Self {
            cfg,
            n_own,
            q: vec![0.0; n],
            max_reward: vec![f64::NEG_INFINITY; n],
            max_count: vec![0; n],
            count: vec![0; n],
            freq: EmpiricalPrior::new(n_states, n_opp),
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
        })
    }

    pub fn q_values(&self, s: StateId) -> &[f64] {
        &self.q[s * self.n_own..(s + 1) * self.n_own]
    }

    /// `Q(a) + c · freq(maxR(a)) · maxR(a)`; untried actions carry no bonus.
    pub fn action_values(&self, s: StateId) -> Vec<f64> {
        (s * self.n_own..(s + 1) * self.n_own)
            .map(|i| {
                if self.count[i] == 0 || self.cfg.fmq_c == 0.0 {
                    self.q[i]
                } else {
                    let f = self.max_count[i] as f64 / self.count[i] as f64;
                    self.q[i] + self.cfg.fmq_c * f * self.max_reward[i]
                }
            })
            .collect()
    }
}

impl DiscreteLearner for Fmq {
    fn act(&mut self, s: StateId) -> usize {
        let eps = self.cfg.epsilon.at(self.t);
        if self.rng.random::<f64>() < eps {
            self.rng.random_range(0..self.n_own)
        } else {
            let v = self.action_values(s);
            argmax_random_tie(&v, &mut self.rng)
        }
    }

    fn learn_from(&mut self, t: Transition<usize>) -> Result<()> {
        self.freq.observe(t.s, t.a_opp);
        let next = if t.done { 0.0 } else { self.q_values(t.s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max) };
        let i = t.s * self.n_own + t.a_i;
        self.q[i] += self.cfg.lr * (t.r + self.cfg.gamma * next - self.q[i]);
        self.count[i] += 1;
        if t.r > self.max_reward[i] {
            self.max_reward[i] = t.r;
            self.max_count[i] = 1;
        } else if t.r == self.max_reward[i] {
            self.max_count[i] += 1;
        }
        self.t += 1;
        Ok(())
    }

    fn policy(&self, s: StateId) -> Vec<f64> {
        epsilon_greedy(&self.action_values(s), self.cfg.epsilon.at(self.t))
    }

    fn opponent_model(&self, _s: StateId) -> Option<Vec<f64>> {
        None
    }

    fn opponent_frequencies(&self, s: StateId) -> Vec<f64> {
        self.freq.probs(s)
    }

    fn checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{climbing_game, STATELESS};
    use crate::math::is_distribution;

    fn step(a_i: usize, a_opp: usize, r: f64) -> Transition<usize> {
        Transition { s: STATELESS, a_i, a_opp, a_opp_model: None, s_next: STATELESS, r, done: true }
    }

    fn climbing_reward(a: usize, b: usize) -> f64 {
        climbing_game().payoff(0, a, b)
    }

    #[test]
    fn jal_best_responds_to_a_stationary_opponent() {
        let mut jal = Jal::new(1, 3, 3, BaselineConfig::default(), 1).unwrap();
        for _ in 0..300 {
            let a = jal.act(STATELESS);
            jal.learn_from(step(a, 0, climbing_reward(a, 0))).unwrap();
        }
        let p = jal.policy(STATELESS);
        assert!(p[0] > 0.98, "{p:?}");
    }

    #[test]
    fn fmq_without_bonus_is_plain_q_learning() {
        let cfg = BaselineConfig { fmq_c: 0.0, ..BaselineConfig::default() };
        let mut fmq = Fmq::new(1, 3, 3, cfg.clone(), 2).unwrap();
        let mut q = [0.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (a, b) = (rng.random_range(0..3), rng.random_range(0..3));
            let r = climbing_reward(a, b);
            fmq.learn_from(step(a, b, r)).unwrap();
            q[a] += cfg.lr * (r - q[a]);
            assert_eq!(fmq.action_values(STATELESS), q.to_vec());
        }
    }

    #[test]
    fn fmq_bonus_favours_rare_high_rewards() {
        let mut fmq = Fmq::new(1, 3, 3, BaselineConfig::default(), 3).unwrap();
        fmq.learn_from(step(0, 0, 11.0)).unwrap();
        fmq.learn_from(step(0, 1, -30.0)).unwrap();
        fmq.learn_from(step(2, 2, 5.0)).unwrap();
        fmq.learn_from(step(2, 0, 0.0)).unwrap();
        let v = fmq.action_values(STATELESS);
        assert!((v[0] - (fmq.q_values(STATELESS)[0] + 10.0 * 0.5 * 11.0)).abs() < 1e-12);
        assert!(v[0] > v[2]);
    }

    #[test]
    fn wolf_policy_stays_on_the_simplex() {
        let mut wolf = WolfPhc::new(1, 3, 3, BaselineConfig::default(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let a = wolf.act(STATELESS);
            let b = rng.random_range(0..3);
            wolf.learn_from(step(a, b, climbing_reward(a, b))).unwrap();
            assert!(is_distribution(wolf.base_policy(STATELESS), 1e-12));
            assert!(is_distribution(&wolf.policy(STATELESS), 1e-12));
            assert!(wolf.base_policy(STATELESS).iter().all(|&p| p >= 0.0));
            assert!(is_distribution(wolf.average_policy(STATELESS), 1e-12));
        }
    }

    #[test]
    fn baseline_policies_are_distributions_and_deterministic() {
        let game = Game::from_id("climbing").unwrap();
        for kind in [BaselineKind::Jal, BaselineKind::WolfPhc, BaselineKind::Fmq, BaselineKind::RommeoQEmp] {
            let run = || {
                let mut l = [
                    build(kind, &BaselineConfig::default(), &game, 0, 5).unwrap(),
                    build(kind, &BaselineConfig::default(), &game, 1, 6).unwrap(),
                ];
                let mut trace = Vec::new();
                for _ in 0..100 {
                    let (a, b) = (l[0].act(STATELESS), l[1].act(STATELESS));
                    let r = climbing_reward(a, b);
                    l[0].learn_from(step(a, b, r)).unwrap();
                    l[1].learn_from(step(b, a, r)).unwrap();
                    for x in &l {
                        assert!(is_distribution(&x.policy(STATELESS), 1e-12));
                    }
                    trace.push((a, b));
                }
                trace
            };
            assert_eq!(run(), run(), "{kind:?}");
        }
    }

    #[test]
    fn continuous_games_are_unsupported() {
        let game = Game::from_id("max-two-quadratics").unwrap();
        let err = build(BaselineKind::Jal, &BaselineConfig::default(), &game, 0, 0).err().unwrap();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn emp_with_uniform_history_matches_rommeo_q_under_uniform_model() {
        let cfg = QConfig::default();
        let mut emp = rommeo_q_emp(1, 3, 3, cfg.clone(), 7).unwrap();
        let mut full = QLearner::seeded(1, 3, 3, cfg.clone(), 7).unwrap();
        for b in 0..3 {
            emp.observe(step(0, b, 0.0));
            full.observe(step(0, b, 0.0));
        }
        let q = crate::soft::JointQTable::from_matrix(&climbing_game().own_view(0)).unwrap();
        emp.set_q(q.clone()).unwrap();
        full.set_q(q.clone()).unwrap();
        let prior = full.opponent_prior();
        let pi = crate::soft::extract_policy(&q, cfg.alpha).unwrap();
        let uniform = crate::soft::OpponentModelTable::from(&prior);
        let expected = crate::soft::marginal_policy(&pi, &uniform, STATELESS);
        for (x, y) in emp.marginal_policy(STATELESS).iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn emp_flag_off_reproduces_rommeo_q() {
        let mut a = rommeo_q_emp(1, 3, 3, QConfig::default(), 8).unwrap();
        let mut b = QLearner::seeded(1, 3, 3, QConfig::default(), 8).unwrap();
        let json = a.to_json().unwrap().replace("\"empirical_opponent\":true", "\"empirical_opponent\":false");
        a = QLearner::from_json(&json).unwrap();
        for _ in 0..60 {
            let (x, y) = (a.act(STATELESS), b.act(STATELESS));
            assert_eq!(x, y);
            DiscreteLearner::learn_from(&mut a, step(x, (x + 1) % 3, climbing_reward(x, (x + 1) % 3))).unwrap();
            DiscreteLearner::learn_from(&mut b, step(y, (y + 1) % 3, climbing_reward(y, (y + 1) % 3))).unwrap();
        }
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(BaselineConfig { delta_win: 0.3, delta_lose: 0.2, ..Default::default() }.validate().is_err());
        assert!(BaselineConfig { fmq_c: -1.0, ..Default::default() }.validate().is_err());
        assert!(BaselineConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(Jal::new(1, 0, 3, BaselineConfig::default(), 0).is_err());
        assert_eq!(EpsilonSchedule::default().at(0), 1.0);
        assert_eq!(EpsilonSchedule::default().at(10_000), 0.01);
    }
}
