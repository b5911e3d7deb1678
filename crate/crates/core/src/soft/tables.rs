use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::math::is_distribution;

/// Mass added to every prior entry before renormalizing, so that `KL(ρ || P)`
/// and the opponent-model extraction stay finite.
pub const DEFAULT_PRIOR_SMOOTHING: f64 = 1e-6;

/// Tolerance used when validating probability tables supplied by callers.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Soft action values `Q(s, a_own, a_opp)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointQTable {
    n_states: usize,
    n_own: usize,
    n_opp: usize,
    values: Vec<f64>,
}

impl JointQTable {
    pub fn zeros(n_states: usize, n_own: usize, n_opp: usize) -> Self {
        Self { n_states, n_own, n_opp, values: vec![0.0; n_states * n_own * n_opp] }
    }

    pub fn from_values(n_states: usize, n_own: usize, n_opp: usize, values: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_own == 0 || n_opp == 0 || values.len() != n_states * n_own * n_opp {
            return Err(contract(format!(
                "Q table of shape {n_states}x{n_own}x{n_opp} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(contract("Q table entries must be finite"));
        }
        Ok(Self { n_states, n_own, n_opp, values })
    }

    /// Single-state table from a payoff matrix indexed `[own][opp]`.
    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<Self> {
        let n_own = matrix.len();
        let n_opp = matrix.first().map_or(0, Vec::len);
        Self::from_values(1, n_own, n_opp, matrix.iter().flatten().copied().collect())
    }

    pub fn from_fn(n_states: usize, n_own: usize, n_opp: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_states * n_own * n_opp);
        for s in 0..n_states {
            for a in 0..n_own {
                for b in 0..n_opp {
                    values.push(f(s, a, b));
                }
            }
        }
        Self { n_states, n_own, n_opp, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_own(&self) -> usize {
        self.n_own
    }

    pub fn n_opp(&self) -> usize {
        self.n_opp
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_states, self.n_own, self.n_opp)
    }

    #[inline]
    fn index(&self, s: usize, a: usize, b: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_own && b < self.n_opp);
        (s * self.n_own + a) * self.n_opp + b
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, b: usize) -> f64 {
        self.values[self.index(s, a, b)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, b: usize, v: f64) {
        let i = self.index(s, a, b);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    /// Sup-norm distance between two tables of equal shape.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "Q tables differ in shape");
        self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(contract("Q table contains non-finite entries"))
        }
    }
}

/// Prior over the opponent's action, `P(a_opp | s)`. Every entry is strictly positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentPrior {
    n_states: usize,
    n_opp: usize,
    probs: Vec<f64>,
}

impl OpponentPrior {
    pub fn uniform(n_states: usize, n_opp: usize) -> Self {
        Self { n_states, n_opp, probs: vec![1.0 / n_opp as f64; n_states * n_opp] }
    }

    /// Validates `probs` (row-major over `(s, a_opp)`) and applies the default smoothing.
    pub fn new(n_states: usize, n_opp: usize, probs: Vec<f64>) -> Result<Self> {
        Self::with_smoothing(n_states, n_opp, probs, DEFAULT_PRIOR_SMOOTHING)
    }

    pub fn with_smoothing(n_states: usize, n_opp: usize, mut probs: Vec<f64>, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(contract("prior smoothing must be positive"));
        }
        if n_states == 0 || n_opp == 0 || probs.len() != n_states * n_opp {
            return Err(contract("prior shape does not match its entries"));
        }
        for row in probs.chunks_mut(n_opp) {
            if !is_distribution(row, NORMALIZATION_TOL) {
                return Err(contract(format!("prior row {row:?} is not a distribution")));
            }
            let z = 1.0 + eps * n_opp as f64;
            row.iter_mut().for_each(|p| *p = (p.max(0.0) + eps) / z);
        }
        Ok(Self { n_states, n_opp, probs })
    }

    pub fn single_state(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        Self::new(1, n, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_opp(&self) -> usize {
        self.n_opp
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_opp..(s + 1) * self.n_opp]
    }

    /// Re-checks normalization and strict positivity; deserialized priors bypass the constructor.
    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != self.n_states * self.n_opp || self.n_opp == 0 {
            return Err(contract("prior shape does not match its entries"));
        }
        for (s, row) in self.probs.chunks(self.n_opp).enumerate() {
            if !is_distribution(row, NORMALIZATION_TOL) || row.iter().any(|&p| p <= 0.0) {
                return Err(contract(format!("prior row for state {s} is not a strictly positive distribution")));
            }
        }
        Ok(())
    }
}

/// Conditional policy `π(a_own | s, a_opp)`, stored as rows over `a_own` indexed by `(s, a_opp)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPolicyTable {
    n_states: usize,
    n_opp: usize,
    n_own: usize,
    probs: Vec<f64>,
}

impl ConditionalPolicyTable {
    pub fn uniform(n_states: usize, n_opp: usize, n_own: usize) -> Self {
        Self { n_states, n_opp, n_own, probs: vec![1.0 / n_own as f64; n_states * n_opp * n_own] }
    }

    pub fn new(n_states: usize, n_opp: usize, n_own: usize, probs: Vec<f64>) -> Result<Self> {
        let table = Self { n_states, n_opp, n_own, probs };
        table.validate()?;
        Ok(table)
    }

    pub(crate) fn from_raw(n_states: usize, n_opp: usize, n_own: usize, probs: Vec<f64>) -> Self {
        Self { n_states, n_opp, n_own, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_opp(&self) -> usize {
        self.n_opp
    }

    pub fn n_own(&self) -> usize {
        self.n_own
    }

    pub fn row(&self, s: usize, b: usize) -> &[f64] {
        let start = (s * self.n_opp + b) * self.n_own;
        &self.probs[start..start + self.n_own]
    }

    pub fn prob(&self, s: usize, a_opp: usize, a_own: usize) -> f64 {
        self.row(s, a_opp)[a_own]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_own == 0 || self.probs.len() != self.n_states * self.n_opp * self.n_own {
            return Err(contract("policy shape does not match its entries"));
        }
        for row in self.probs.chunks(self.n_own) {
            if !is_distribution(row, NORMALIZATION_TOL) {
                return Err(contract(format!("policy row {row:?} is not a distribution")));
            }
        }
        Ok(())
    }
}

/// Opponent model `ρ(a_opp | s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentModelTable {
    n_states: usize,
    n_opp: usize,
    probs: Vec<f64>,
}

impl OpponentModelTable {
    pub fn uniform(n_states: usize, n_opp: usize) -> Self {
        Self { n_states, n_opp, probs: vec![1.0 / n_opp as f64; n_states * n_opp] }
    }

    pub fn new(n_states: usize, n_opp: usize, probs: Vec<f64>) -> Result<Self> {
        let table = Self { n_states, n_opp, probs };
        table.validate()?;
        Ok(table)
    }

    pub(crate) fn from_raw(n_states: usize, n_opp: usize, probs: Vec<f64>) -> Self {
        Self { n_states, n_opp, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_opp(&self) -> usize {
        self.n_opp
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_opp..(s + 1) * self.n_opp]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_opp == 0 || self.probs.len() != self.n_states * self.n_opp {
            return Err(contract("opponent model shape does not match its entries"));
        }
        for row in self.probs.chunks(self.n_opp) {
            if !is_distribution(row, NORMALIZATION_TOL) {
                return Err(contract(format!("opponent model row {row:?} is not a distribution")));
            }
        }
        Ok(())
    }
}

impl From<&OpponentPrior> for OpponentModelTable {
    fn from(prior: &OpponentPrior) -> Self {
        Self { n_states: prior.n_states, n_opp: prior.n_opp, probs: prior.probs.clone() }
    }
}
