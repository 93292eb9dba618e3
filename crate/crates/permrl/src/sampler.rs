//! Task-level prioritized sampling: smoothed difficulty scores, power-law
//! selection probabilities, and importance-sampling weight correction.
//!
//! Naming note: the priority exponent, IS exponent, and smoothing coefficient
//! are kept under distinct names here (`priority_exponent`, `is_exponent`,
//! `smoothing`) since α, β, γ are overloaded elsewhere in the system.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SamplerState {
    scores: Vec<f64>,
    /// Degree of prioritization; 0 recovers uniform sampling.
    pub priority_exponent: f64,
    /// IS correction strength in [0, 1]; 1 fully compensates the bias.
    pub is_exponent: f64,
    /// Exponential smoothing coefficient λ_s in [0, 1] applied to scores.
    pub smoothing: f64,
}

impl SamplerState {
    /// Scores start at 1.0 so the first selections are uniform and every
    /// task is reachable.
    pub fn new(
        task_count: usize,
        priority_exponent: f64,
        is_exponent: f64,
        smoothing: f64,
    ) -> Result<Self> {
        if task_count == 0 {
            return Err(Error::Domain("sampler needs at least one task".into()));
        }
        if priority_exponent < 0.0 {
            return Err(Error::Domain("priority exponent must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&is_exponent) {
            return Err(Error::Domain("IS exponent must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&smoothing) {
            return Err(Error::Domain("smoothing must be in [0, 1]".into()));
        }
        Ok(SamplerState {
            scores: vec![1.0; task_count],
            priority_exponent,
            is_exponent,
            smoothing,
        })
    }

    pub fn task_count(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// s_t ← λ_s·s_t + (1−λ_s)·batch_score.
    pub fn update_score(&mut self, task: usize, batch_score: f64) -> Result<()> {
        if task >= self.scores.len() {
            return Err(Error::Domain(format!("task id {task} out of range")));
        }
        if !batch_score.is_finite() || batch_score < 0.0 {
            return Err(Error::Domain(format!(
                "batch score must be finite and >= 0, got {batch_score}"
            )));
        }
        self.scores[task] = self.smoothing * self.scores[task] + (1.0 - self.smoothing) * batch_score;
        Ok(())
    }

    /// Selection probabilities p_t = s_t^a / Σ s^a with the convention 0^0 = 1.
    ///
    /// If every score is zero and the exponent is positive, falls back to
    /// uniform.
    pub fn probabilities(&self) -> Vec<f64> {
        let a = self.priority_exponent;
        let powered: Vec<f64> = self
            .scores
            .iter()
            .map(|&s| if a == 0.0 { 1.0 } else { s.powf(a) })
            .collect();
        let total: f64 = powered.iter().sum();
        if total <= 0.0 {
            return vec![1.0 / self.scores.len() as f64; self.scores.len()];
        }
        powered.iter().map(|p| p / total).collect()
    }

    /// Unnormalized IS weights 1/(T·p_t)^β.
    pub fn raw_is_weights(&self) -> Vec<f64> {
        let t = self.scores.len() as f64;
        self.probabilities()
            .iter()
            .map(|&p| (1.0 / (t * p)).powf(self.is_exponent))
            .collect()
    }

    /// IS weights normalized by the maximum, so the largest weight is 1.
    pub fn is_weights(&self) -> Vec<f64> {
        let raw = self.raw_is_weights();
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        raw.iter().map(|w| w / max).collect()
    }

    /// Categorical draw from the selection probabilities.
    pub fn sample_task<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let p = self.probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }
}
