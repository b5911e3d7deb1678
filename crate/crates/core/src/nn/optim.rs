use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First-order optimizer with its moment state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(contract(format!("step size must be positive, got {lr}")));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = kind {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(contract("Adam needs decay terms in [0, 1) and a positive epsilon"));
            }
        }
        let moments = if matches!(kind, OptimizerKind::Sgd) { 0 } else { n_params };
        Ok(Self { kind, lr, m: vec![0.0; moments], v: vec![0.0; moments], t: 0 })
    }

    pub fn sgd(lr: f64, n_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr, n_params)
    }

    pub fn adam(lr: f64, n_params: usize) -> Result<Self> {
        Self::new(OptimizerKind::adam(), lr, n_params)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step. A non-finite gradient leaves params and state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || (!self.m.is_empty() && self.m.len() != params.len()) {
            return Err(contract("optimizer, params and gradient lengths differ"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - beta2.powi(self.t.min(i32::MAX as u64) as i32);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar_step() {
        let mut opt = Optimizer::sgd(0.1, 1).unwrap();
        let mut x = [0.0];
        opt.step(&mut x, &[1.0]).unwrap();
        assert_eq!(x, [-0.1]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [Optimizer::sgd(0.1, 2).unwrap(), Optimizer::adam(0.1, 2).unwrap()] {
            let mut x = [1.5, -2.0];
            opt.step(&mut x, &[0.0, 0.0]).unwrap();
            assert_eq!(x, [1.5, -2.0]);
        }
    }

    #[test]
    fn quadratic_bowl_decays_geometrically() {
        let mut opt = Optimizer::sgd(0.4, 1).unwrap();
        let mut x = [1.0];
        let mut prev = 1.0f64;
        for k in 1..=50 {
            let g = [2.0 * x[0]];
            opt.step(&mut x, &g).unwrap();
            assert!(x[0].abs() < prev);
            assert!((x[0] - 0.2f64.powi(k)).abs() < 1e-15);
            prev = x[0].abs();
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut opt = Optimizer::adam(0.1, 1).unwrap();
        let mut x = [1.0];
        assert!(opt.step(&mut x, &[f64::NAN]).is_err());
        assert_eq!((x, opt.steps()), ([1.0], 0));
        assert!(Optimizer::sgd(0.0, 1).is_err());
        assert!(Optimizer::sgd(0.1, 2).unwrap().step(&mut x, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn adam_first_step_has_unit_scale() {
        let mut opt = Optimizer::adam(0.01, 2).unwrap();
        let mut x = [0.0, 0.0];
        opt.step(&mut x, &[100.0, -0.001]).unwrap();
        assert!((x[0] + 0.01).abs() < 1e-9 && (x[1] - 0.01).abs() < 1e-4);
    }
}
