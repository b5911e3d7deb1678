//! Property suites runnable outside the test harness, with a JSON report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::game::{climbing_game, max_two_quadratics_reward, Transition, STATELESS};
use crate::nn::gradcheck::{central_difference, max_relative_error};
use crate::nn::{Activation, Mlp, SquashedGaussianHead};
use crate::rommeo_ac::{AcAgent, AcConfig, Net, TargetNoise};
use crate::rommeo_q::importance_soft_value;
use crate::soft::{
    bellman_operator, evaluate_policy_pair, extract_opponent_model, extract_policy, opponent_improvement_step,
    pair_soft_value, policy_improvement_step, soft_value, solve_fixed_point, ConditionalPolicyTable, Horizon,
    JointQTable, OpponentModelTable, OpponentPrior, SoftConfig, TabularGame,
};

pub const SUITES: [&str; 6] = ["solver", "contraction", "monotone", "gradients", "v-bar", "environment"];

/// Allowed relative error between analytic and finite-difference gradients.
pub const GRADIENT_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub suite: String,
    pub property: String,
    pub samples: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub bound: f64,
    /// `bound - worst` for upper bounds, `worst - bound` for lower bounds.
    pub margin: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

struct Tracker {
    suite: &'static str,
    property: String,
    upper: bool,
    bound: f64,
    samples: usize,
    worst: f64,
    counterexample: Option<Value>,
}

impl Tracker {
    fn at_most(suite: &'static str, property: &str, bound: f64) -> Self {
        Self { suite, property: property.into(), upper: true, bound, samples: 0, worst: f64::NEG_INFINITY, counterexample: None }
    }

    fn at_least(suite: &'static str, property: &str, bound: f64) -> Self {
        Self { upper: false, worst: f64::INFINITY, ..Self::at_most(suite, property, bound) }
    }

    fn record(&mut self, value: f64, context: impl FnOnce() -> Value) {
        self.samples += 1;
        let worse = if self.upper { value > self.worst } else { value < self.worst } || value.is_nan();
        if worse && !self.worst.is_nan() {
            self.worst = value;
        }
        let ok = if self.upper { value <= self.bound } else { value >= self.bound };
        if !ok && self.counterexample.is_none() {
            self.counterexample = Some(json!({ "value": value, "input": context() }));
        }
    }

    fn finish(self) -> PropertyResult {
        let margin = if self.upper { self.bound - self.worst } else { self.worst - self.bound };
        PropertyResult {
            suite: self.suite.into(),
            property: self.property,
            samples: self.samples,
            worst: self.worst,
            bound: self.bound,
            margin,
            passed: self.counterexample.is_none() && self.samples > 0 && !self.worst.is_nan(),
            counterexample: self.counterexample,
        }
    }
}

/// Runs one suite, or every suite for `"all"`.
pub fn run_check(suite: &str) -> Result<CheckReport> {
    let ids: Vec<&str> = match suite {
        "" => return Err(Error::Config(format!("empty suite id; expected one of {} or all", SUITES.join(", ")))),
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        s => return Err(Error::Config(format!("unknown suite {s:?}; expected one of {} or all", SUITES.join(", ")))),
    };
    let mut properties = Vec::new();
    for id in ids {
        properties.extend(match id {
            "solver" => solver_suite()?,
            "contraction" => contraction_suite()?,
            "monotone" => monotone_suite()?,
            "gradients" => gradient_suite()?,
            "v-bar" => v_bar_suite()?,
            _ => environment_suite()?,
        });
    }
    let passed = properties.iter().all(|p| p.passed);
    Ok(CheckReport { suite: suite.into(), passed, properties })
}

fn climbing_tabular(horizon: Horizon) -> TabularGame {
    TabularGame::from_matrix(&climbing_game(), 0, horizon)
}

fn solver_suite() -> Result<Vec<PropertyResult>> {
    let cfg = SoftConfig { alpha: 1.0, gamma: 0.0, ..SoftConfig::default() };
    let sol = solve_fixed_point(&climbing_tabular(Horizon::SingleStep), &OpponentPrior::uniform(1, 3), &cfg)?;
    let rho_a = sol.rho_star.row(0)[0];
    let mut lo = Tracker::at_least("solver", "rho*(A) >= 0.970", 0.970);
    lo.record(rho_a, || json!({ "rho": sol.rho_star.row(0) }));
    let mut hi = Tracker::at_most("solver", "rho*(A) <= 0.977", 0.977);
    hi.record(rho_a, || json!({ "rho": sol.rho_star.row(0) }));
    let mut pi = Tracker::at_least("solver", "pi*(A|A) >= 0.9999", 0.9999);
    pi.record(sol.pi_star.prob(0, 0, 0), || json!({ "pi_given_A": sol.pi_star.row(0, 0) }));
    let mut arg = Tracker::at_most("solver", "joint argmax is (A,A)", 0.0);
    let (a, b) = sol.joint_argmax(0);
    arg.record((a + b) as f64, || json!({ "argmax": [a, b] }));
    Ok(vec![lo.finish(), hi.finish(), pi.finish(), arg.finish()])
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let z: f64 = row.iter().sum();
    row.into_iter().map(|x| x / z).collect()
}

/// A random game whose transitions stay in a random state.
fn random_repeated_game(rng: &mut ChaCha8Rng, n_states: usize, n_own: usize, n_opp: usize) -> TabularGame {
    let reward = JointQTable::from_fn(n_states, n_own, n_opp, |_, _, _| rng.random_range(-10.0..10.0));
    let kernel = (0..n_states * n_own * n_opp).flat_map(|_| random_distribution(rng, n_states)).collect();
    TabularGame::with_kernel(reward, Some(kernel)).expect("valid random game")
}

fn random_prior(rng: &mut ChaCha8Rng, n_states: usize, n_opp: usize) -> OpponentPrior {
    let probs = (0..n_states).flat_map(|_| random_distribution(rng, n_opp)).collect();
    OpponentPrior::new(n_states, n_opp, probs).expect("valid random prior")
}

fn random_q(rng: &mut ChaCha8Rng, n_states: usize, n_own: usize, n_opp: usize) -> JointQTable {
    JointQTable::from_fn(n_states, n_own, n_opp, |_, _, _| rng.random_range(-20.0..20.0))
}

fn contraction_suite() -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let mut t = Tracker::at_most("contraction", "|TQ1 - TQ2| / |Q1 - Q2| - gamma <= 0", 1e-12);
    for case in 0..1000 {
        let gamma = if case % 2 == 0 { 0.5 } else { 0.9 };
        let (s, a, b) = (rng.random_range(1..=2), rng.random_range(1..=4), rng.random_range(1..=4));
        let alpha = rng.random_range(0.1..3.0);
        let game = random_repeated_game(&mut rng, s, a, b);
        let prior = random_prior(&mut rng, s, b);
        let q1 = random_q(&mut rng, s, a, b);
        let q2 = random_q(&mut rng, s, a, b);
        let cfg = SoftConfig { alpha, gamma, ..SoftConfig::default() };
        let d = q1.sup_distance(&q2);
        if d == 0.0 {
            continue;
        }
        let ratio = bellman_operator(&q1, &game, &prior, &cfg)?.sup_distance(&bellman_operator(&q2, &game, &prior, &cfg)?) / d;
        t.record(ratio - gamma, || json!({ "gamma": gamma, "alpha": alpha, "q1": q1.values(), "q2": q2.values() }));
    }
    Ok(vec![t.finish()])
}

pub const MONOTONE_TOL: f64 = 1e-9;

fn monotone_suite() -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x30);
    let mut tq = Tracker::at_least("monotone", "min elementwise change of Q^{pi,rho} per round", -MONOTONE_TOL);
    let mut tw = Tracker::at_least("monotone", "min change of the soft objective per round", -MONOTONE_TOL);
    for game_idx in 0..100 {
        let (s, a, b) = (rng.random_range(1..=2), rng.random_range(2..=4), rng.random_range(2..=4));
        let game = random_repeated_game(&mut rng, s, a, b);
        let prior = random_prior(&mut rng, s, b);
        let cfg = SoftConfig { alpha: rng.random_range(0.2..2.0), gamma: 0.9, ..SoftConfig::default() };
        let mut pi = ConditionalPolicyTable::uniform(s, b, a);
        let mut rho = OpponentModelTable::uniform(s, b);
        let mut q = evaluate_policy_pair(&game, &pi, &rho, &prior, &cfg)?;
        let mut w = pair_soft_value(&q, &pi, &rho, &prior, cfg.alpha);
        for round in 0..10 {
            pi = policy_improvement_step(&q, cfg.alpha)?;
            let q_mid = evaluate_policy_pair(&game, &pi, &rho, &prior, &cfg)?;
            rho = opponent_improvement_step(&q_mid, &pi, &prior, cfg.alpha)?;
            let q_next = evaluate_policy_pair(&game, &pi, &rho, &prior, &cfg)?;
            let w_next = pair_soft_value(&q_next, &pi, &rho, &prior, cfg.alpha);
            let dq = q_next.values().iter().zip(q.values()).map(|(n, o)| n - o).fold(f64::INFINITY, f64::min);
            let dw = w_next.iter().zip(&w).map(|(n, o)| n - o).fold(f64::INFINITY, f64::min);
            tq.record(dq, || json!({ "game": game_idx, "round": round }));
            tw.record(dw, || json!({ "game": game_idx, "round": round }));
            q = q_next;
            w = w_next;
        }
    }
    Ok(vec![tq.finish(), tw.finish()])
}

fn ac_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition<f64>> {
    (0..n)
        .map(|_| Transition {
            s: STATELESS,
            a_i: rng.random_range(-9.0..9.0),
            a_opp: rng.random_range(-9.0..9.0),
            a_opp_model: None,
            s_next: STATELESS,
            r: rng.random_range(-2.0..2.0),
            done: rng.random_bool(0.3),
        })
        .collect()
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn net_fd(agent: &AcAgent, which: Net, loss: impl Fn(&AcAgent) -> f64) -> Vec<f64> {
    let net = agent.net(which).clone();
    central_difference(net.params(), |p| {
        let mut probe = agent.clone();
        let perturbed = Mlp::from_params(net.widths(), net.activation(), p.to_vec()).expect("same layout");
        probe.set_net(which, perturbed).expect("same widths");
        loss(&probe)
    })
}

fn gradient_suite() -> Result<Vec<PropertyResult>> {
    const CASES: u64 = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6D);
    let mut mlp = Tracker::at_most("gradients", "MLP parameter and input gradients", GRADIENT_TOL);
    for case in 0..CASES {
        let depth = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=4)];
        widths.extend((0..depth).map(|_| rng.random_range(1..=6)));
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let net = Mlp::random(&widths, act, &mut rng)?;
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let up: Vec<f64> = (0..*widths.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (gp, gx) = net.gradients(&x, &up)?;
        let dot = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum::<f64>();
        let fp = central_difference(net.params(), |p| {
            dot(&Mlp::from_params(&widths, act, p.to_vec()).unwrap(), &x)
        });
        let fx = central_difference(&x, |xx| dot(&net, xx));
        let err = max_relative_error(&gp, &fp).max(max_relative_error(&gx, &fx));
        mlp.record(err, || json!({ "case": case, "widths": widths, "input": x }));
    }

    let head = SquashedGaussianHead::new(-10.0, 10.0)?;
    let mut sq = Tracker::at_most("gradients", "squashed Gaussian log-prob", GRADIENT_TOL);
    for case in 0..CASES {
        let x = [rng.random_range(-1.5..1.5), rng.random_range(-3.0..1.0), rng.random_range(-9.0..9.0)];
        let e: f64 = rng.sample(StandardNormal);
        let d = head.log_density(x[0], x[1], x[2]);
        let fd = central_difference(&x, |p| head.log_density(p[0], p[1], p[2]).log_prob);
        let s = head.sample(x[0], x[1], e);
        let fs = central_difference(&x[..2], |p| head.sample(p[0], p[1], e).log_prob);
        let err = max_relative_error(&[d.d_mean, d.d_log_std, d.d_action], &fd)
            .max(max_relative_error(&[s.dlogp_dmean, s.dlogp_dlog_std], &fs));
        sq.record(err, || json!({ "case": case, "mean": x[0], "log_std": x[1], "action": x[2], "eps": e }));
    }

    let mut losses = [
        Tracker::at_most("gradients", "critic loss", GRADIENT_TOL),
        Tracker::at_most("gradients", "policy loss", GRADIENT_TOL),
        Tracker::at_most("gradients", "opponent-model loss", GRADIENT_TOL),
        Tracker::at_most("gradients", "prior loss", GRADIENT_TOL),
    ];
    for case in 0..CASES {
        let cfg = AcConfig {
            alpha: rng.random_range(0.0..2.0),
            gamma: rng.random_range(0.0..0.99),
            hidden: vec![8, 8],
            batch_size: 4,
            ..AcConfig::default()
        };
        let agent = AcAgent::new(1, (-10.0, 10.0), (-10.0, 10.0), cfg, case)?;
        let batch = ac_batch(&mut rng, 4);
        let ctx = || json!({ "case": case });

        let y = normals(&mut rng, 4);
        let (_, g) = agent.critic_loss(&batch, &y)?;
        losses[0].record(max_relative_error(&g, &net_fd(&agent, Net::Q, |p| p.critic_loss(&batch, &y).unwrap().0)), ctx);

        let noise = TargetNoise { rho: normals(&mut rng, 4), pi: normals(&mut rng, 4) };
        let (_, g) = agent.policy_loss(&batch, &noise)?;
        losses[1].record(max_relative_error(&g, &net_fd(&agent, Net::Pi, |p| p.policy_loss(&batch, &noise).unwrap().0)), ctx);

        let e = normals(&mut rng, 4);
        let (_, g) = agent.opponent_model_loss(&batch, &e)?;
        let fd = net_fd(&agent, Net::Rho, |p| p.opponent_model_loss(&batch, &e).unwrap().0);
        losses[2].record(max_relative_error(&g, &fd), ctx);

        let (_, g) = agent.prior_loss(&batch)?;
        losses[3].record(max_relative_error(&g, &net_fd(&agent, Net::Prior, |p| p.prior_loss(&batch).unwrap().0)), ctx);
    }
    let mut out = vec![mlp.finish(), sq.finish()];
    out.extend(losses.into_iter().map(Tracker::finish));
    Ok(out)
}

fn v_bar_suite() -> Result<Vec<PropertyResult>> {
    let q_bar = JointQTable::from_matrix(&climbing_game().own_view(0))?;
    let lagged = JointQTable::from_fn(1, 3, 3, |s, a, b| 0.5 * q_bar.get(s, a, b));
    let prior = OpponentPrior::single_state(vec![0.2, 0.5, 0.3])?;
    let pi = extract_policy(&lagged, 1.0)?;
    let rho = extract_opponent_model(&lagged, &prior, 1.0)?;
    let exact = soft_value(&q_bar, &prior, 1.0)?[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5B);
    let mut t = Tracker::at_most("v-bar", "|estimate - exact| at K = 1e5", 1e-2);
    for rep in 0..5 {
        let est = importance_soft_value(&q_bar, STATELESS, &prior, &pi, &rho, 100_000, &mut rng);
        t.record((est - exact).abs(), || json!({ "rep": rep, "estimate": est, "exact": exact }));
    }
    Ok(vec![t.finish()])
}

fn environment_suite() -> Result<Vec<PropertyResult>> {
    let mut t = Tracker::at_most("environment", "|reward - expected|", 1e-12);
    for (a1, a2, want) in [(5.0, 5.0, 10.0), (-5.0, -5.0, 0.0)] {
        let r = max_two_quadratics_reward(a1, a2)?;
        t.record((r - want).abs(), || json!({ "game": "max-two-quadratics", "actions": [a1, a2], "reward": r }));
    }
    let expected = [[11.0, -30.0, 0.0], [-30.0, 7.0, 6.0], [0.0, 0.0, 5.0]];
    let g = climbing_game();
    for (i, row) in expected.iter().enumerate() {
        for (j, &want) in row.iter().enumerate() {
            let r = g.rewards(i, j)?;
            t.record((r[0] - want).abs().max((r[1] - want).abs()), || json!({ "game": "climbing", "actions": [i, j], "rewards": r }));
        }
    }
    Ok(vec![t.finish()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_unknown_ids_are_usage_errors() {
        assert!(matches!(run_check(""), Err(Error::Config(_))));
        assert!(matches!(run_check("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn fast_suites_pass() {
        for id in ["solver", "environment", "contraction"] {
            let r = run_check(id).unwrap();
            assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
        }
    }

    #[test]
    fn tracker_keeps_first_counterexample() {
        let mut t = Tracker::at_most("x", "p", 1.0);
        t.record(0.5, || json!(1));
        t.record(2.0, || json!(2));
        t.record(3.0, || json!(3));
        let r = t.finish();
        assert!(!r.passed);
        assert_eq!(r.worst, 3.0);
        assert_eq!(r.margin, -2.0);
        assert_eq!(r.counterexample.unwrap()["input"], json!(2));
    }
}
