//! Points on the probability simplex: the action type of every allocation task.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum.
pub const SUM_TOL: f64 = 1e-9;

/// An allocation of a unit resource across `m` entities.
///
/// Weights are nonnegative, at most one, and sum to one within [`SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    weights: Vec<f64>,
}

impl Allocation {
    /// Validates and wraps a weight vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("allocation must have at least one entity".into()));
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!(
                    "allocation weight {i} = {w} outside [0, 1]"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Domain(format!(
                "allocation weights sum to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(Allocation { weights })
    }

    /// Renormalizes a vector of nonnegative masses into an allocation.
    ///
    /// Used once after softmax-style computations to absorb rounding.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Numeric(format!(
                "cannot normalize weights with total mass {sum}"
            )));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Allocation::new(weights)
    }

    /// The equal-weight allocation 1/m.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("uniform allocation needs m >= 1".into()));
        }
        Allocation::new(vec![1.0 / m as f64; m])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Maximum absolute componentwise difference.
    pub fn linf_distance(&self, other: &Allocation) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Allocation {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// The equal-weight allocation over `m` entities.
pub fn uniform_allocation(m: usize) -> Result<Allocation> {
    Allocation::uniform(m)
}
