//! ROMMEO actor-critic for games with one-dimensional box actions.
//!
//! Every agent owns a critic `Q_ω(s, a, â)`, its Polyak-averaged target, a
//! conditional policy `π_θ(a | s, â)`, an opponent model `ρ_φ(â | s)` and a
//! prior `P_ψ(â | s)` fit by maximum likelihood to the opponent's real
//! actions. Stochastic heads are tanh-squashed Gaussians; all gradients are
//! reparameterized through fixed standard-normal noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::game::{StateId, Transition};
use crate::nn::{Activation, Mlp, Optimizer, OptimizerKind, SquashedGaussianHead, Trace};
use crate::rommeo_q::ReplayBuffer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lr_q: f64,
    pub lr_pi: f64,
    pub lr_rho: f64,
    pub lr_prior: f64,
    pub batch_size: usize,
    /// Polyak blend factor for the target critic.
    pub tau: f64,
    /// Updates between target blends.
    pub target_interval: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 0.95,
            lr_q: 3e-4,
            lr_pi: 3e-4,
            lr_rho: 3e-4,
            lr_prior: 3e-4,
            batch_size: 64,
            tau: 0.01,
            target_interval: 1,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::adam(),
        }
    }
}

impl AcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(0.0..1.0).contains(&self.gamma) {
            return Err(contract("alpha must be non-negative and gamma in [0, 1)"));
        }
        for lr in [self.lr_q, self.lr_pi, self.lr_rho, self.lr_prior] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(contract(format!("learning rates must be positive, got {lr}")));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(contract("target blend must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.target_interval == 0 || self.batch_size > self.buffer_capacity {
            return Err(contract("need 0 < batch_size <= buffer_capacity and a positive target interval"));
        }
        if self.hidden.contains(&0) {
            return Err(contract("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Names the agent's networks for inspection and surgery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Net {
    Q,
    QTarget,
    Pi,
    Rho,
    Prior,
}

/// Noise behind one batch of critic targets: per transition, one draw for
/// `â'` and one for `a'`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNoise {
    pub rho: Vec<f64>,
    pub pi: Vec<f64>,
}

/// Noise for the policy loss: `â` from the opponent model and `a` from the policy.
pub type PolicyNoise = TargetNoise;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateLosses {
    pub critic: f64,
    pub policy: f64,
    pub opponent_model: f64,
    pub prior: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcAgent {
    cfg: AcConfig,
    n_states: usize,
    own: SquashedGaussianHead,
    opp: SquashedGaussianHead,
    q: Mlp,
    q_target: Mlp,
    pi: Mlp,
    rho: Mlp,
    prior: Mlp,
    opt_q: Optimizer,
    opt_pi: Optimizer,
    opt_rho: Optimizer,
    opt_prior: Optimizer,
    buffer: ReplayBuffer<Transition<f64>>,
    rng: ChaCha8Rng,
    updates: u64,
}

/// Network outputs for one state, shared by every transition from that state.
struct StateHeads {
    traces: Vec<Option<Trace>>,
}

impl StateHeads {
    fn output(&self, s: StateId) -> (f64, f64) {
        let o = self.traces[s].as_ref().expect("state evaluated").output();
        (o[0], o[1])
    }
}

impl AcAgent {
    /// `own` and `opp` are the `(low, high)` bounds of this agent's and the opponent's actions.
    pub fn new(n_states: usize, own: (f64, f64), opp: (f64, f64), cfg: AcConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if n_states == 0 {
            return Err(contract("need at least one state"));
        }
        let own = SquashedGaussianHead::new(own.0, own.1)?;
        let opp = SquashedGaussianHead::new(opp.0, opp.1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = |n_in: usize, n_out: usize| {
            let mut w = vec![n_in];
            w.extend(&cfg.hidden);
            w.push(n_out);
            w
        };
        let q = Mlp::random(&widths(n_states + 2, 1), cfg.activation, &mut rng)?;
        let pi = Mlp::random(&widths(n_states + 1, 2), cfg.activation, &mut rng)?;
        let rho = Mlp::random(&widths(n_states, 2), cfg.activation, &mut rng)?;
        let prior = Mlp::random(&widths(n_states, 2), cfg.activation, &mut rng)?;
        Ok(Self {
            opt_q: Optimizer::new(cfg.optimizer, cfg.lr_q, q.n_params())?,
            opt_pi: Optimizer::new(cfg.optimizer, cfg.lr_pi, pi.n_params())?,
            opt_rho: Optimizer::new(cfg.optimizer, cfg.lr_rho, rho.n_params())?,
            opt_prior: Optimizer::new(cfg.optimizer, cfg.lr_prior, prior.n_params())?,
            q_target: q.clone(),
            q,
            pi,
            rho,
            prior,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            n_states,
            own,
            opp,
            rng,
            updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &AcConfig {
        &self.cfg
    }

    pub fn net(&self, which: Net) -> &Mlp {
        match which {
            Net::Q => &self.q,
            Net::QTarget => &self.q_target,
            Net::Pi => &self.pi,
            Net::Rho => &self.rho,
            Net::Prior => &self.prior,
        }
    }

    /// Replaces a network. Its input and output widths must match; the hidden
    /// layout may differ. The matching optimizer state is reset.
    pub fn set_net(&mut self, which: Net, net: Mlp) -> Result<()> {
        let current = self.net(which);
        if net.input_width() != current.input_width() || net.output_width() != current.output_width() {
            return Err(contract("replacement network has the wrong input or output width"));
        }
        net.validate()?;
        let n = net.n_params();
        let (kind, cfg) = (self.cfg.optimizer, &self.cfg);
        match which {
            Net::Q => {
                self.opt_q = Optimizer::new(kind, cfg.lr_q, n)?;
                self.q = net;
            }
            Net::QTarget => {
                if n != self.q.n_params() {
                    return Err(contract("target critic must share the critic's layout"));
                }
                self.q_target = net;
            }
            Net::Pi => {
                self.opt_pi = Optimizer::new(kind, cfg.lr_pi, n)?;
                self.pi = net;
            }
            Net::Rho => {
                self.opt_rho = Optimizer::new(kind, cfg.lr_rho, n)?;
                self.rho = net;
            }
            Net::Prior => {
                self.opt_prior = Optimizer::new(kind, cfg.lr_prior, n)?;
                self.prior = net;
            }
        }
        Ok(())
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<f64>> {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn own_head(&self) -> SquashedGaussianHead {
        self.own
    }

    pub fn opponent_head(&self) -> SquashedGaussianHead {
        self.opp
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if s >= self.n_states {
            return Err(contract(format!("state {s} out of range for {} states", self.n_states)));
        }
        Ok(())
    }

    fn scale(head: &SquashedGaussianHead, a: f64) -> f64 {
        (a - head.center()) / head.half_width()
    }

    fn state_input(&self, s: StateId, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend((0..self.n_states).map(|k| if k == s { 1.0 } else { 0.0 }));
    }

    fn pi_input(&self, s: StateId, a_opp: f64, buf: &mut Vec<f64>) {
        self.state_input(s, buf);
        buf.push(Self::scale(&self.opp, a_opp));
    }

    fn q_input(&self, s: StateId, a_own: f64, a_opp: f64, buf: &mut Vec<f64>) {
        self.state_input(s, buf);
        buf.push(Self::scale(&self.own, a_own));
        buf.push(Self::scale(&self.opp, a_opp));
    }

    /// Evaluates a state-only network once per distinct state in `states`.
    fn heads_for(&self, net: &Mlp, states: impl IntoIterator<Item = StateId>) -> Result<StateHeads> {
        let mut traces: Vec<Option<Trace>> = vec![None; self.n_states];
        let mut input = Vec::new();
        for s in states {
            self.check_state(s)?;
            if traces[s].is_none() {
                let mut t = Trace::default();
                self.state_input(s, &mut input);
                net.forward_trace(&input, &mut t)?;
                traces[s] = Some(t);
            }
        }
        Ok(StateHeads { traces })
    }

    fn head_output(&self, net: &Mlp, input: &[f64]) -> (f64, f64) {
        let o = net.forward(input).expect("widths fixed at construction");
        (o[0], o[1])
    }

    /// Squashed means of the opponent model and of the policy conditioned on it.
    pub fn means(&self, s: StateId) -> Result<(f64, f64)> {
        self.check_state(s)?;
        let mut input = Vec::new();
        self.state_input(s, &mut input);
        let (m_rho, _) = self.head_output(&self.rho, &input);
        let a_opp = self.opp.squash(m_rho);
        self.pi_input(s, a_opp, &mut input);
        let (m_pi, _) = self.head_output(&self.pi, &input);
        Ok((self.own.squash(m_pi), a_opp))
    }

    pub fn policy_mean(&self, s: StateId) -> Result<f64> {
        Ok(self.means(s)?.0)
    }

    pub fn opponent_model_mean(&self, s: StateId) -> Result<f64> {
        Ok(self.means(s)?.1)
    }

    pub fn prior_mean(&self, s: StateId) -> Result<f64> {
        self.check_state(s)?;
        let mut input = Vec::new();
        self.state_input(s, &mut input);
        Ok(self.opp.squash(self.head_output(&self.prior, &input).0))
    }

    /// Samples `â ~ ρ(·|s)` and then `a ~ π(·|s, â)`; returns `(a, â)`.
    pub fn act(&mut self, s: StateId) -> Result<(f64, f64)> {
        let e_rho: f64 = self.rng.sample(StandardNormal);
        let e_pi: f64 = self.rng.sample(StandardNormal);
        self.act_with_noise(s, e_rho, e_pi)
    }

    pub fn act_with_noise(&self, s: StateId, e_rho: f64, e_pi: f64) -> Result<(f64, f64)> {
        self.check_state(s)?;
        let mut input = Vec::new();
        self.state_input(s, &mut input);
        let (m, l) = self.head_output(&self.rho, &input);
        let a_opp = self.opp.sample(m, l, e_rho).action;
        self.pi_input(s, a_opp, &mut input);
        let (m, l) = self.head_output(&self.pi, &input);
        Ok((self.own.sample(m, l, e_pi).action, a_opp))
    }

    pub fn observe(&mut self, t: Transition<f64>) -> Result<()> {
        self.check_state(t.s)?;
        self.check_state(t.s_next)?;
        if !(t.r.is_finite() && t.a_i.is_finite() && t.a_opp.is_finite()) {
            return Err(Error::NonFinite("transition"));
        }
        self.buffer.push(t);
        Ok(())
    }

    /// `V̄(s') = Q̄(s', a', â') - log ρ(â'|s') - α log π(a'|s', â') + log P(â'|s')` at fixed noise.
    pub fn v_bar_with_noise(&self, s_next: StateId, e_rho: f64, e_pi: f64) -> Result<f64> {
        let rho = self.heads_for(&self.rho, [s_next])?;
        let prior = self.heads_for(&self.prior, [s_next])?;
        let mut scratch = (Trace::default(), Trace::default(), Vec::new());
        self.v_bar_from_heads(s_next, &rho, &prior, e_rho, e_pi, &mut scratch)
    }

    fn v_bar_from_heads(
        &self,
        s_next: StateId,
        rho: &StateHeads,
        prior: &StateHeads,
        e_rho: f64,
        e_pi: f64,
        (pi_trace, q_trace, input): &mut (Trace, Trace, Vec<f64>),
    ) -> Result<f64> {
        let (m, l) = rho.output(s_next);
        let rho_s = self.opp.sample(m, l, e_rho);
        let (pm, pl) = prior.output(s_next);
        let log_p = self.opp.log_density(pm, pl, rho_s.action).log_prob;
        self.pi_input(s_next, rho_s.action, input);
        self.pi.forward_trace(input, pi_trace)?;
        let pi_s = self.own.sample(pi_trace.output()[0], pi_trace.output()[1], e_pi);
        self.q_input(s_next, pi_s.action, rho_s.action, input);
        self.q_target.forward_trace(input, q_trace)?;
        Ok(q_trace.output()[0] - rho_s.log_prob - self.cfg.alpha * pi_s.log_prob + log_p)
    }

    pub fn v_bar(&mut self, s_next: StateId) -> Result<f64> {
        let e_rho: f64 = self.rng.sample(StandardNormal);
        let e_pi: f64 = self.rng.sample(StandardNormal);
        self.v_bar_with_noise(s_next, e_rho, e_pi)
    }

    fn draw_noise(&mut self, n: usize) -> TargetNoise {
        let mut draw = || (0..n).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
        let rho = draw();
        let pi = draw();
        TargetNoise { rho, pi }
    }

    /// Regression targets `y = r` for terminal transitions, else `r + γ V̄(s')`.
    pub fn critic_targets(&self, batch: &[Transition<f64>], noise: &TargetNoise) -> Result<Vec<f64>> {
        if noise.rho.len() != batch.len() || noise.pi.len() != batch.len() {
            return Err(contract("critic targets need two noise draws per transition"));
        }
        let live = || batch.iter().filter(|t| !t.done).map(|t| t.s_next);
        let rho = self.heads_for(&self.rho, live())?;
        let prior = self.heads_for(&self.prior, live())?;
        let mut scratch = (Trace::default(), Trace::default(), Vec::new());
        batch
            .iter()
            .enumerate()
            .map(|(k, t)| {
                if t.done {
                    Ok(t.r)
                } else {
                    let v = self.v_bar_from_heads(t.s_next, &rho, &prior, noise.rho[k], noise.pi[k], &mut scratch)?;
                    Ok(t.r + self.cfg.gamma * v)
                }
            })
            .collect()
    }

    /// Mean of `½ (Q(s, a, a_opp) - y)²` with the opponent's real action, and its gradient in ω.
    pub fn critic_loss(&self, batch: &[Transition<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() || targets.len() != batch.len() {
            return Err(contract("critic loss needs one target per transition"));
        }
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.q.n_params()];
        let mut trace = Trace::default();
        let mut input = Vec::new();
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(targets) {
            self.check_state(t.s)?;
            self.q_input(t.s, t.a_i, t.a_opp, &mut input);
            self.q.forward_trace(&input, &mut trace)?;
            let err = trace.output()[0] - y;
            loss += 0.5 * err * err / n;
            self.q.backward(&mut trace, &[err / n], Some(&mut grad), None)?;
        }
        Ok((loss, grad))
    }

    /// Mean of `α log π(a|s,â) - Q(s, a, â)` with `a = f_θ(ε; s, â)` and `â`
    /// drawn from the opponent model (held fixed); gradient in θ.
    pub fn policy_loss(&self, batch: &[Transition<f64>], noise: &PolicyNoise) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() || noise.rho.len() != batch.len() || noise.pi.len() != batch.len() {
            return Err(contract("policy loss needs two noise draws per transition"));
        }
        let n = batch.len() as f64;
        let alpha = self.cfg.alpha;
        let rho_heads = self.heads_for(&self.rho, batch.iter().map(|t| t.s))?;
        let mut grad = vec![0.0; self.pi.n_params()];
        let (mut pi_trace, mut q_trace) = (Trace::default(), Trace::default());
        let mut input = Vec::new();
        let mut q_in_grad = vec![0.0; self.q.input_width()];
        let mut loss = 0.0;
        for (k, t) in batch.iter().enumerate() {
            let (m, l) = rho_heads.output(t.s);
            let a_opp = self.opp.sample(m, l, noise.rho[k]).action;
            self.pi_input(t.s, a_opp, &mut input);
            self.pi.forward_trace(&input, &mut pi_trace)?;
            let (m, l) = (pi_trace.output()[0], pi_trace.output()[1]);
            let smp = self.own.sample(m, l, noise.pi[k]);
            self.q_input(t.s, smp.action, a_opp, &mut input);
            self.q.forward_trace(&input, &mut q_trace)?;
            let q = q_trace.output()[0];
            self.q.backward(&mut q_trace, &[1.0], None, Some(&mut q_in_grad))?;
            let dq_da = q_in_grad[self.n_states] / self.own.half_width();
            loss += (alpha * smp.log_prob - q) / n;
            let up = [
                (alpha * smp.dlogp_dmean - dq_da * smp.da_dmean) / n,
                (alpha * smp.dlogp_dlog_std - dq_da * smp.da_dlog_std) / n,
            ];
            self.pi.backward(&mut pi_trace, &up, Some(&mut grad), None)?;
        }
        Ok((loss, grad))
    }

    /// Mean of `log ρ(â|s) - log P(â|s) - Q(s, a, â) + α log π(a|s, â)` with
    /// `â = g_φ(ε; s)` and `a` the agent's recorded action; gradient in φ
    /// flows through `â` into every term.
    pub fn opponent_model_loss(&self, batch: &[Transition<f64>], noise: &[f64]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() || noise.len() != batch.len() {
            return Err(contract("opponent-model loss needs one noise draw per transition"));
        }
        let n = batch.len() as f64;
        let alpha = self.cfg.alpha;
        let mut rho_heads = self.heads_for(&self.rho, batch.iter().map(|t| t.s))?;
        let prior_heads = self.heads_for(&self.prior, batch.iter().map(|t| t.s))?;
        let mut upstream = vec![[0.0f64; 2]; self.n_states];
        let (mut pi_trace, mut q_trace) = (Trace::default(), Trace::default());
        let mut input = Vec::new();
        let mut q_in_grad = vec![0.0; self.q.input_width()];
        let mut pi_in_grad = vec![0.0; self.pi.input_width()];
        let mut loss = 0.0;
        for (k, t) in batch.iter().enumerate() {
            let (m, l) = rho_heads.output(t.s);
            let smp = self.opp.sample(m, l, noise[k]);
            let a_opp = smp.action;
            let (pm, pl) = prior_heads.output(t.s);
            let prior_d = self.opp.log_density(pm, pl, a_opp);

            self.q_input(t.s, t.a_i, a_opp, &mut input);
            self.q.forward_trace(&input, &mut q_trace)?;
            let q = q_trace.output()[0];
            self.q.backward(&mut q_trace, &[1.0], None, Some(&mut q_in_grad))?;
            let dq = q_in_grad[self.n_states + 1] / self.opp.half_width();

            self.pi_input(t.s, a_opp, &mut input);
            self.pi.forward_trace(&input, &mut pi_trace)?;
            let pi_d = self.own.log_density(pi_trace.output()[0], pi_trace.output()[1], t.a_i);
            self.pi.backward(&mut pi_trace, &[pi_d.d_mean, pi_d.d_log_std], None, Some(&mut pi_in_grad))?;
            let dpi = pi_in_grad[self.n_states] / self.opp.half_width();

            loss += (smp.log_prob - prior_d.log_prob - q + alpha * pi_d.log_prob) / n;
            let d_action = -prior_d.d_action - dq + alpha * dpi;
            let up = &mut upstream[t.s];
            up[0] += (smp.dlogp_dmean + d_action * smp.da_dmean) / n;
            up[1] += (smp.dlogp_dlog_std + d_action * smp.da_dlog_std) / n;
        }
        let mut grad = vec![0.0; self.rho.n_params()];
        for (s, trace) in rho_heads.traces.iter_mut().enumerate() {
            if let Some(trace) = trace {
                self.rho.backward(trace, &upstream[s], Some(&mut grad), None)?;
            }
        }
        Ok((loss, grad))
    }

    /// Mean negative log-likelihood of the opponent's real actions under `P_ψ`; gradient in ψ.
    pub fn prior_loss(&self, batch: &[Transition<f64>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(contract("prior loss needs a non-empty batch"));
        }
        let n = batch.len() as f64;
        let mut heads = self.heads_for(&self.prior, batch.iter().map(|t| t.s))?;
        let mut upstream = vec![[0.0f64; 2]; self.n_states];
        let mut loss = 0.0;
        for t in batch {
            let (m, l) = heads.output(t.s);
            let d = self.opp.log_density(m, l, t.a_opp);
            loss -= d.log_prob / n;
            upstream[t.s][0] -= d.d_mean / n;
            upstream[t.s][1] -= d.d_log_std / n;
        }
        let mut grad = vec![0.0; self.prior.n_params()];
        for (s, trace) in heads.traces.iter_mut().enumerate() {
            if let Some(trace) = trace {
                self.prior.backward(trace, &upstream[s], Some(&mut grad), None)?;
            }
        }
        Ok((loss, grad))
    }

    /// Applies a step, restoring the old parameters if anything becomes non-finite.
    fn guarded_step(net: &mut Mlp, opt: &mut Optimizer, loss: f64, grad: &[f64], what: &'static str) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::NonFinite(what));
        }
        let backup = opt.clone();
        let before = net.params().to_vec();
        opt.step(net.params_mut(), grad)?;
        if net.params().iter().any(|p| !p.is_finite()) {
            net.params_mut().copy_from_slice(&before);
            *opt = backup;
            return Err(Error::NonFinite(what));
        }
        Ok(())
    }

    pub fn update_critic(&mut self, batch: &[Transition<f64>]) -> Result<f64> {
        let noise = self.draw_noise(batch.len());
        let targets = self.critic_targets(batch, &noise)?;
        let (loss, grad) = self.critic_loss(batch, &targets)?;
        Self::guarded_step(&mut self.q, &mut self.opt_q, loss, &grad, "critic update")?;
        Ok(loss)
    }

    pub fn update_policy(&mut self, batch: &[Transition<f64>]) -> Result<f64> {
        let noise = self.draw_noise(batch.len());
        let (loss, grad) = self.policy_loss(batch, &noise)?;
        Self::guarded_step(&mut self.pi, &mut self.opt_pi, loss, &grad, "policy update")?;
        Ok(loss)
    }

    pub fn update_opponent_model(&mut self, batch: &[Transition<f64>]) -> Result<f64> {
        let noise = self.draw_noise(batch.len()).rho;
        let (loss, grad) = self.opponent_model_loss(batch, &noise)?;
        Self::guarded_step(&mut self.rho, &mut self.opt_rho, loss, &grad, "opponent-model update")?;
        Ok(loss)
    }

    pub fn update_prior(&mut self, batch: &[Transition<f64>]) -> Result<f64> {
        let (loss, grad) = self.prior_loss(batch)?;
        Self::guarded_step(&mut self.prior, &mut self.opt_prior, loss, &grad, "prior update")?;
        Ok(loss)
    }

    /// `ω̄ ← τ ω + (1 - τ) ω̄`.
    pub fn sync_target(&mut self) {
        let tau = self.cfg.tau;
        for (t, w) in self.q_target.params_mut().iter_mut().zip(self.q.params()) {
            *t = tau * w + (1.0 - tau) * *t;
        }
    }

    /// One round of all four updates on a shared minibatch, then a target
    /// blend every `target_interval` rounds. `None` until the buffer holds a batch.
    pub fn update(&mut self) -> Result<Option<UpdateLosses>> {
        if self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.buffer.sample(&mut self.rng, self.cfg.batch_size);
        let losses = UpdateLosses {
            critic: self.update_critic(&batch)?,
            policy: self.update_policy(&batch)?,
            opponent_model: self.update_opponent_model(&batch)?,
            prior: self.update_prior(&batch)?,
        };
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_interval as u64) {
            self.sync_target();
        }
        Ok(Some(losses))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let agent: Self = serde_json::from_str(json)?;
        agent.cfg.validate()?;
        for net in [&agent.q, &agent.q_target, &agent.pi, &agent.rho, &agent.prior] {
            net.validate()?;
        }
        Ok(agent)
    }
}

#[cfg(test)]
mod tests;
