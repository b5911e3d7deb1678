use super::*;
use crate::game::STATELESS;
use crate::nn::gradcheck::{central_difference, max_relative_error};
use crate::nn::LOG_STD_MIN;

const BOX: (f64, f64) = (-10.0, 10.0);

fn agent(cfg: AcConfig, seed: u64) -> AcAgent {
    AcAgent::new(1, BOX, BOX, cfg, seed).unwrap()
}

fn small_cfg() -> AcConfig {
    AcConfig { hidden: vec![8, 8], batch_size: 4, ..AcConfig::default() }
}

/// Linear head that ignores its input and emits `(mean, log_std)`.
fn constant_head(n_in: usize, mean: f64, log_std: f64) -> Mlp {
    let mut p = vec![0.0; 2 * n_in];
    p.extend([mean, log_std]);
    Mlp::from_params(&[n_in, 2], Activation::Tanh, p).unwrap()
}

/// Critic `tanh(k(x - x0 + d)) - tanh(k(x - x0 - d))` in input coordinate
/// `coord`: a bump peaking at `x = x0` (action `10 x0`).
fn bump_critic(coord: usize, x0: f64) -> Mlp {
    let (k, d) = (2.0, 0.3);
    let mut w = vec![0.0; 6];
    w[0] = k * (d - x0);
    w[coord] = k;
    w[3] = -k * (d + x0);
    w[3 + coord] = k;
    let mut p = w;
    p.extend([0.0, 0.0, 1.0, -1.0, 0.0]);
    Mlp::from_params(&[3, 2, 1], Activation::Tanh, p).unwrap()
}

fn transition(a_i: f64, a_opp: f64, r: f64, done: bool) -> Transition<f64> {
    Transition { s: STATELESS, a_i, a_opp, a_opp_model: None, s_next: STATELESS, r, done }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition<f64>> {
    (0..n)
        .map(|_| {
            transition(
                rng.random_range(-9.0..9.0),
                rng.random_range(-9.0..9.0),
                rng.random_range(-2.0..2.0),
                rng.random_bool(0.3),
            )
        })
        .collect()
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Finite-difference gradient of `loss` with respect to one network's parameters.
fn numeric_grad(a: &AcAgent, which: Net, loss: impl Fn(&AcAgent) -> f64) -> Vec<f64> {
    let net = a.net(which).clone();
    central_difference(net.params(), |p| {
        let mut probe = a.clone();
        probe.set_net(which, Mlp::from_params(net.widths(), net.activation(), p.to_vec()).unwrap()).unwrap();
        loss(&probe)
    })
}

fn random_case(case: u64) -> (AcAgent, Vec<Transition<f64>>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
    let cfg = AcConfig { alpha: rng.random_range(0.0..2.0), gamma: rng.random_range(0.0..0.99), ..small_cfg() };
    let a = agent(cfg, case);
    let batch = random_batch(&mut rng, 4);
    (a, batch, rng)
}

#[test]
fn critic_gradient_matches_finite_differences() {
    for case in 0..100 {
        let (a, batch, mut rng) = random_case(case);
        let y: Vec<f64> = (0..batch.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, g) = a.critic_loss(&batch, &y).unwrap();
        let fd = numeric_grad(&a, Net::Q, |p| p.critic_loss(&batch, &y).unwrap().0);
        assert!(max_relative_error(&g, &fd) < 1e-4, "case {case}");
    }
}

#[test]
fn policy_gradient_matches_finite_differences() {
    for case in 0..100 {
        let (a, batch, mut rng) = random_case(case);
        let noise = TargetNoise { rho: normals(&mut rng, 4), pi: normals(&mut rng, 4) };
        let (_, g) = a.policy_loss(&batch, &noise).unwrap();
        let fd = numeric_grad(&a, Net::Pi, |p| p.policy_loss(&batch, &noise).unwrap().0);
        assert!(max_relative_error(&g, &fd) < 1e-4, "case {case}");
    }
}

#[test]
fn opponent_model_gradient_matches_finite_differences() {
    for case in 0..100 {
        let (a, batch, mut rng) = random_case(case);
        let noise = normals(&mut rng, 4);
        let (_, g) = a.opponent_model_loss(&batch, &noise).unwrap();
        let fd = numeric_grad(&a, Net::Rho, |p| p.opponent_model_loss(&batch, &noise).unwrap().0);
        assert!(max_relative_error(&g, &fd) < 1e-4, "case {case}");
    }
}

#[test]
fn prior_gradient_matches_finite_differences() {
    for case in 0..100 {
        let (a, batch, _) = random_case(case);
        let (_, g) = a.prior_loss(&batch).unwrap();
        let fd = numeric_grad(&a, Net::Prior, |p| p.prior_loss(&batch).unwrap().0);
        assert!(max_relative_error(&g, &fd) < 1e-4, "case {case}");
    }
}

#[test]
fn concentrated_opponent_model_samples_near_its_mean() {
    let mut a = agent(small_cfg(), 1);
    a.set_net(Net::Rho, constant_head(1, 0.5f64.atanh(), -5.0)).unwrap();
    for _ in 0..100 {
        let (_, a_opp) = a.act(STATELESS).unwrap();
        assert!((a_opp - 5.0).abs() < 0.3, "{a_opp}");
    }
}

#[test]
fn acting_is_reproducible_and_bounded() {
    let mut a = agent(small_cfg(), 7);
    let mut b = agent(small_cfg(), 7);
    for _ in 0..50 {
        assert_eq!(a.act(STATELESS).unwrap(), b.act(STATELESS).unwrap());
    }
    a.set_net(Net::Rho, constant_head(1, 40.0, 2.0)).unwrap();
    a.set_net(Net::Pi, constant_head(2, -40.0, 2.0)).unwrap();
    for _ in 0..1000 {
        let (x, y) = a.act(STATELESS).unwrap();
        assert!(x > -10.0 && x < 10.0 && y > -10.0 && y < 10.0);
    }
    assert!(a.act(3).is_err());
}

/// `Q̄(a', â')` and `log π(a'|â')` along the sampling path used by `V̄`.
fn path_terms(a: &AcAgent, e_rho: f64, e_pi: f64) -> (f64, f64, f64) {
    let (a_own, a_opp) = a.act_with_noise(STATELESS, e_rho, e_pi).unwrap();
    let q_bar = a.net(Net::QTarget).forward(&[1.0, a_own / 10.0, a_opp / 10.0]).unwrap()[0];
    let o = a.net(Net::Pi).forward(&[1.0, a_opp / 10.0]).unwrap();
    let log_pi = a.own_head().sample(o[0], o[1], e_pi).log_prob;
    let o = a.net(Net::Rho).forward(&[1.0]).unwrap();
    let log_rho = a.opponent_head().sample(o[0], o[1], e_rho).log_prob;
    (q_bar, log_pi, log_rho)
}

#[test]
fn v_bar_density_terms_cancel_when_model_equals_prior() {
    let mut a = agent(AcConfig { alpha: 0.7, ..small_cfg() }, 2);
    let rho = a.net(Net::Rho).clone();
    a.set_net(Net::Prior, rho).unwrap();
    for (e1, e2) in [(0.0, 0.0), (1.3, -0.4), (-2.0, 0.9)] {
        let (q_bar, log_pi, _) = path_terms(&a, e1, e2);
        let v = a.v_bar_with_noise(STATELESS, e1, e2).unwrap();
        assert!((v - (q_bar - 0.7 * log_pi)).abs() < 1e-9);
    }
}

#[test]
fn v_bar_without_entropy_weight() {
    let a = agent(AcConfig { alpha: 0.0, ..small_cfg() }, 3);
    let (e1, e2) = (0.4, -1.1);
    let (q_bar, _, log_rho) = path_terms(&a, e1, e2);
    let (_, a_opp) = a.act_with_noise(STATELESS, e1, e2).unwrap();
    let o = a.net(Net::Prior).forward(&[1.0]).unwrap();
    let log_p = a.opponent_head().log_density(o[0], o[1], a_opp).log_prob;
    let v = a.v_bar_with_noise(STATELESS, e1, e2).unwrap();
    assert!((v - (q_bar - log_rho + log_p)).abs() < 1e-6);
}

#[test]
fn terminal_targets_are_rewards() {
    let a = agent(small_cfg(), 4);
    let batch: Vec<_> = (0..5).map(|k| transition(1.0, -1.0, k as f64, true)).collect();
    let noise = TargetNoise { rho: vec![f64::NAN; 5], pi: vec![f64::NAN; 5] };
    assert_eq!(a.critic_targets(&batch, &noise).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn critic_at_its_targets_does_not_move() {
    let mut a = agent(small_cfg(), 5);
    let batch: Vec<_> = [(1.0, 2.0), (-3.0, 4.0)]
        .iter()
        .map(|&(x, y)| {
            let q = a.net(Net::Q).forward(&[1.0, x / 10.0, y / 10.0]).unwrap()[0];
            transition(x, y, q, true)
        })
        .collect();
    let before = a.net(Net::Q).clone();
    assert_eq!(a.update_critic(&batch).unwrap(), 0.0);
    assert_eq!(a.net(Net::Q), &before);
}

#[test]
fn critic_loss_decreases_on_a_fixed_batch() {
    let cfg = AcConfig { optimizer: OptimizerKind::Sgd, lr_q: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<_> = random_batch(&mut rng, 16).into_iter().map(|t| Transition { done: true, ..t }).collect();
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        let loss = a.update_critic(&batch).unwrap();
        assert!(loss < prev);
        prev = loss;
    }
}

fn stateless_batch(n: usize) -> Vec<Transition<f64>> {
    (0..n).map(|k| transition(-8.0 + k as f64, 0.0, 0.0, true)).collect()
}

#[test]
fn policy_climbs_a_concave_critic() {
    let cfg = AcConfig { alpha: 0.0, lr_pi: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 8);
    a.set_net(Net::Q, bump_critic(1, 0.5)).unwrap();
    a.set_net(Net::Pi, constant_head(2, 0.0, -1.0)).unwrap();
    let start = a.policy_mean(STATELESS).unwrap();
    for _ in 0..300 {
        a.update_policy(&stateless_batch(16)).unwrap();
    }
    let end = a.policy_mean(STATELESS).unwrap();
    assert!(end > start && (end - 5.0).abs() < 1.0, "{start} -> {end}");
}

#[test]
fn flat_critic_makes_the_policy_widen() {
    let cfg = AcConfig { alpha: 1.0, lr_pi: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 9);
    a.set_net(Net::Q, Mlp::zeros(&[3, 1], Activation::Tanh).unwrap()).unwrap();
    a.set_net(Net::Pi, constant_head(2, 0.0, -2.0)).unwrap();
    for _ in 0..100 {
        a.update_policy(&stateless_batch(16)).unwrap();
    }
    let (_, a_opp) = a.means(STATELESS).unwrap();
    let log_std = a.net(Net::Pi).forward(&[1.0, a_opp / 10.0]).unwrap()[1];
    assert!(log_std > -2.0, "{log_std}");
}

#[test]
fn opponent_model_relaxes_toward_prior() {
    let cfg = AcConfig { alpha: 1.0, lr_rho: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 10);
    a.set_net(Net::Q, Mlp::zeros(&[3, 1], Activation::Tanh).unwrap()).unwrap();
    a.set_net(Net::Pi, constant_head(2, 0.0, 0.0)).unwrap();
    a.set_net(Net::Prior, constant_head(1, 0.5f64.atanh(), 0.0)).unwrap();
    a.set_net(Net::Rho, constant_head(1, 0.0, 0.0)).unwrap();
    for _ in 0..300 {
        a.update_opponent_model(&stateless_batch(16)).unwrap();
    }
    let m = a.opponent_model_mean(STATELESS).unwrap();
    assert!((m - 5.0).abs() < 1.0, "{m}");
}

#[test]
fn opponent_model_is_drawn_to_high_value() {
    let cfg = AcConfig { alpha: 1.0, lr_rho: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 11);
    a.set_net(Net::Q, bump_critic(2, 0.5)).unwrap();
    a.set_net(Net::Pi, constant_head(2, 0.0, 0.0)).unwrap();
    a.set_net(Net::Prior, constant_head(1, 0.0, 1.0)).unwrap();
    a.set_net(Net::Rho, constant_head(1, 0.0, -1.0)).unwrap();
    for _ in 0..300 {
        a.update_opponent_model(&stateless_batch(16)).unwrap();
    }
    let m = a.opponent_model_mean(STATELESS).unwrap();
    assert!(m > 2.0, "{m}");
}

#[test]
fn prior_fits_constant_data() {
    let cfg = AcConfig { lr_prior: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 12);
    a.set_net(Net::Prior, constant_head(1, 0.0, 0.0)).unwrap();
    let batch: Vec<_> = (0..16).map(|_| transition(0.0, 5.0, 0.0, true)).collect();
    for _ in 0..3000 {
        a.update_prior(&batch).unwrap();
    }
    let o = a.net(Net::Prior).forward(&[1.0]).unwrap();
    assert!((o[0] - 0.5f64.atanh()).abs() < 2e-2, "{o:?}");
    assert!(o[1] <= LOG_STD_MIN, "{o:?}");
}

#[test]
fn prior_mean_is_zero_on_symmetric_data() {
    let cfg = AcConfig { lr_prior: 1e-2, ..small_cfg() };
    let mut a = agent(cfg, 13);
    let batch: Vec<_> = [-3.0, 3.0, -7.0, 7.0].iter().map(|&x| transition(0.0, x, 0.0, true)).collect();
    for _ in 0..2000 {
        a.update_prior(&batch).unwrap();
    }
    assert!(a.prior_mean(STATELESS).unwrap().abs() < 0.1);
}

#[test]
fn target_blending() {
    let mut a = agent(AcConfig { tau: 1.0, ..small_cfg() }, 14);
    let before = a.net(Net::QTarget).clone();
    a.sync_target();
    assert_eq!(a.net(Net::QTarget), &before);

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let other = Mlp::random(a.net(Net::Q).widths(), Activation::Tanh, &mut rng).unwrap();
    a.set_net(Net::Q, other.clone()).unwrap();
    a.sync_target();
    assert_eq!(a.net(Net::QTarget).params(), other.params());

    let mut b = agent(AcConfig { tau: 0.01, ..small_cfg() }, 15);
    b.set_net(Net::Q, other).unwrap();
    let gap = |b: &AcAgent| b.net(Net::Q).params().iter().zip(b.net(Net::QTarget).params()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let g0 = gap(&b);
    for k in 1..=200 {
        b.sync_target();
        assert!((gap(&b) - g0 * 0.99f64.powi(k)).abs() < 1e-12);
    }
}

#[test]
fn update_waits_for_a_full_batch_and_keeps_params_finite() {
    let mut a = agent(small_cfg(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for t in random_batch(&mut rng, 3) {
        a.observe(t).unwrap();
    }
    assert!(a.update().unwrap().is_none());
    for t in random_batch(&mut rng, 20) {
        a.observe(t).unwrap();
    }
    for _ in 0..50 {
        let losses = a.update().unwrap().unwrap();
        assert!(losses.critic.is_finite() && losses.policy.is_finite());
    }
    assert_eq!(a.updates(), 50);
    for which in [Net::Q, Net::QTarget, Net::Pi, Net::Rho, Net::Prior] {
        assert!(a.net(which).params().iter().all(|p| p.is_finite()));
    }
    assert!(a.observe(transition(f64::NAN, 0.0, 0.0, true)).is_err());
}

#[test]
fn checkpoint_resumes_identically() {
    let mut a = agent(small_cfg(), 17);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for t in random_batch(&mut rng, 10) {
        a.observe(t).unwrap();
    }
    a.update().unwrap();
    let mut b = AcAgent::from_json(&a.to_json().unwrap()).unwrap();
    for _ in 0..5 {
        a.update().unwrap();
        b.update().unwrap();
        assert_eq!(a.act(STATELESS).unwrap(), b.act(STATELESS).unwrap());
    }
    assert_eq!(a.net(Net::Q), b.net(Net::Q));
}

#[test]
fn config_validation() {
    assert!(AcConfig { tau: 0.0, ..AcConfig::default() }.validate().is_err());
    assert!(AcConfig { gamma: 1.0, ..AcConfig::default() }.validate().is_err());
    assert!(AcConfig { lr_pi: -1.0, ..AcConfig::default() }.validate().is_err());
    assert!(AcConfig { batch_size: 10, buffer_capacity: 5, ..AcConfig::default() }.validate().is_err());
    let json = serde_json::to_string(&AcConfig::default()).unwrap();
    assert_eq!(serde_json::from_str::<AcConfig>(&json).unwrap(), AcConfig::default());
    assert!(serde_json::from_str::<AcConfig>(r#"{"lr_v": 0.1}"#).is_err());
}
