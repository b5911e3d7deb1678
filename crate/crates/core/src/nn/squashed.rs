//! Tanh-squashed Gaussian over a bounded interval.
//!
//! A network emits `(mean, log_std)`; actions are `c + h tanh(mean + std ε)`
//! where `c` and `h` are the interval's center and half-width.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Added inside the log-Jacobian so it stays finite near saturation.
pub const JACOBIAN_EPS: f64 = 1e-6;

/// `tanh` outputs are clipped to this magnitude so actions stay strictly inside the interval.
const MAX_SQUASH: f64 = 1.0 - 1e-12;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquashedGaussianHead {
    pub low: f64,
    pub high: f64,
}

/// A reparameterized draw and its derivatives at fixed noise. Derivatives
/// with respect to `log_std` refer to the unclamped network output and vanish
/// where the clamp is active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquashedSample {
    pub action: f64,
    pub log_prob: f64,
    pub da_dmean: f64,
    pub da_dlog_std: f64,
    pub dlogp_dmean: f64,
    pub dlogp_dlog_std: f64,
}

/// Log density of a given action and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDensity {
    pub log_prob: f64,
    pub d_mean: f64,
    pub d_log_std: f64,
    pub d_action: f64,
}

/// Clamped log std and the derivative mask of the clamp.
#[inline]
fn clamp_log_std(log_std: f64) -> (f64, f64) {
    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&log_std) {
        (log_std, 1.0)
    } else {
        (log_std.clamp(LOG_STD_MIN, LOG_STD_MAX), 0.0)
    }
}

impl SquashedGaussianHead {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(contract(format!("invalid squash bounds ({low}, {high})")));
        }
        Ok(Self { low, high })
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    pub fn squash(&self, raw: f64) -> f64 {
        self.center() + self.half_width() * raw.tanh().clamp(-MAX_SQUASH, MAX_SQUASH)
    }

    pub fn sample(&self, mean: f64, log_std: f64, epsilon: f64) -> SquashedSample {
        let half = self.half_width();
        let (l, mask) = clamp_log_std(log_std);
        let std = l.exp();
        let raw = mean + std * epsilon;
        let t = raw.tanh();
        let (u, du) = if t.abs() < MAX_SQUASH { (t, 1.0 - t * t) } else { (t.signum() * MAX_SQUASH, 0.0) };
        let jac = half * (1.0 - u * u) + JACOBIAN_EPS;
        let dlogp_draw = 2.0 * half * u * du / jac;
        SquashedSample {
            action: self.center() + half * u,
            log_prob: -0.5 * epsilon * epsilon - l - HALF_LOG_TWO_PI - jac.ln(),
            da_dmean: half * du,
            da_dlog_std: mask * half * du * std * epsilon,
            dlogp_dmean: dlogp_draw,
            dlogp_dlog_std: mask * (-1.0 + dlogp_draw * std * epsilon),
        }
    }

    pub fn log_density(&self, mean: f64, log_std: f64, action: f64) -> LogDensity {
        let half = self.half_width();
        let (l, mask) = clamp_log_std(log_std);
        let std = l.exp();
        let u_raw = (action - self.center()) / half;
        let saturated = u_raw.abs() >= MAX_SQUASH;
        let u = u_raw.clamp(-MAX_SQUASH, MAX_SQUASH);
        let one_minus = 1.0 - u * u;
        let eps = (u.atanh() - mean) / std;
        let jac = half * one_minus + JACOBIAN_EPS;
        let d_action = if saturated { 0.0 } else { -eps / (std * half * one_minus) + 2.0 * u / jac };
        LogDensity {
            log_prob: -0.5 * eps * eps - l - HALF_LOG_TWO_PI - jac.ln(),
            d_mean: eps / std,
            d_log_std: mask * (eps * eps - 1.0),
            d_action,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn head() -> SquashedGaussianHead {
        SquashedGaussianHead::new(-10.0, 10.0).unwrap()
    }

    #[test]
    fn zero_noise_gives_squashed_mean() {
        let s = head().sample(0.7, -1.0, 0.0);
        assert_eq!(s.action, head().squash(0.7));
    }

    #[test]
    fn standard_case_log_prob() {
        let s = head().sample(0.0, 0.0, 0.0);
        assert_eq!(s.action, 0.0);
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - (10.0f64 + JACOBIAN_EPS).ln();
        assert!((s.log_prob - expected).abs() < 1e-12);
        assert!((s.log_prob + 3.2215).abs() < 1e-4);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let total: f64 = (0..n).map(|_| head().log_density(0.3, -0.2, rng.random_range(-10.0..10.0)).log_prob.exp()).sum();
        let integral = 20.0 * total / n as f64;
        assert!((integral - 1.0).abs() < 0.01, "{integral}");
    }

    #[test]
    fn samples_stay_strictly_inside() {
        let h = SquashedGaussianHead::new(-1.0, 3.0).unwrap();
        for raw_mean in [-100.0, -3.0, 0.0, 3.0, 100.0] {
            for eps in [-50.0, -1.0, 0.0, 1.0, 50.0] {
                let a = h.sample(raw_mean, 2.0, eps).action;
                assert!(a > -1.0 && a < 3.0, "{a}");
            }
        }
    }

    #[test]
    fn sample_and_density_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (m, l, e): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-2.0..0.5), rng.sample(StandardNormal));
            let s = head().sample(m, l, e);
            let d = head().log_density(m, l, s.action);
            assert!((s.log_prob - d.log_prob).abs() < 1e-6);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let s = head().sample(0.0, 10.0, 0.0);
        assert_eq!(s.log_prob, head().sample(0.0, LOG_STD_MAX, 0.0).log_prob);
        assert_eq!(s.dlogp_dlog_std, 0.0);
        assert_eq!(head().log_density(0.0, -9.0, 1.0).d_log_std, 0.0);
    }

    #[test]
    fn sample_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-1.5..1.5), rng.random_range(-3.0..1.0)];
            let e: f64 = rng.sample(StandardNormal);
            let s = head().sample(x[0], x[1], e);
            let fd_a = central_difference(&x, |p| head().sample(p[0], p[1], e).action);
            let fd_lp = central_difference(&x, |p| head().sample(p[0], p[1], e).log_prob);
            assert!(max_relative_error(&[s.da_dmean, s.da_dlog_std], &fd_a) < 1e-4);
            assert!(max_relative_error(&[s.dlogp_dmean, s.dlogp_dlog_std], &fd_lp) < 1e-4);
        }
    }

    #[test]
    fn density_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = [rng.random_range(-1.5..1.5), rng.random_range(-3.0..1.0), rng.random_range(-9.0..9.0)];
            let d = head().log_density(x[0], x[1], x[2]);
            let fd = central_difference(&x, |p| head().log_density(p[0], p[1], p[2]).log_prob);
            assert!(max_relative_error(&[d.d_mean, d.d_log_std, d.d_action], &fd) < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(SquashedGaussianHead::new(1.0, 1.0).is_err());
        assert!(SquashedGaussianHead::new(f64::NAN, 1.0).is_err());
    }
}
