//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rommeo::game::{max_two_quadratics_reward, Transition, STATELESS};
use rommeo::rommeo_ac::{AcAgent, AcConfig};

/// A differential-game agent whose buffer already holds `n` random transitions.
pub fn warm_ac_agent(cfg: AcConfig, n: usize, seed: u64) -> AcAgent {
    let mut agent = AcAgent::new(1, (-10.0, 10.0), (-10.0, 10.0), cfg, seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n {
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let r = max_two_quadratics_reward(a, b).expect("in range");
        let t = Transition { s: STATELESS, a_i: a, a_opp: b, a_opp_model: Some(b), s_next: STATELESS, r, done: k % 25 == 24 };
        agent.observe(t).expect("finite transition");
    }
    agent
}
