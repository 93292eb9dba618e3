//! Portfolio allocation task: weight drift, transaction-cost log-return
//! reward, state windows, task generation, and the deviation scorer.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::simplex::{uniform_allocation, Allocation};
use crate::state::StateMatrix;
use crate::task::Task;

/// Smoothing width for the |·| surrogate used in gradients only.
pub const TURNOVER_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PortfolioConfig {
    /// Price window length H in periods.
    pub window: usize,
    /// Commission rate per unit turnover.
    pub commission_rate: f64,
    /// Global instrument universe size M.
    pub universe: usize,
    /// Entities per task, m = |U_t|.
    pub task_size: usize,
}

impl PortfolioConfig {
    pub fn new(window: usize, commission_rate: f64, universe: usize, task_size: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&commission_rate) {
            return Err(Error::Domain(format!(
                "commission rate must satisfy 0 <= c < 1, got {commission_rate}"
            )));
        }
        if window < 1 {
            return Err(Error::Domain("window must be >= 1".into()));
        }
        if task_size < 1 || task_size > universe {
            return Err(Error::Domain(format!(
                "task size must satisfy 1 <= m <= M, got m={task_size}, M={universe}"
            )));
        }
        Ok(PortfolioConfig {
            window,
            commission_rate,
            universe,
            task_size,
        })
    }
}

/// End-of-period allocation after prices move: `w_i = a_i y_i / Σ_j a_j y_j`.
pub fn portfolio_weights_drift(a: &Allocation, y: &[f64]) -> Result<Allocation> {
    if y.len() != a.len() {
        return Err(Error::Dimension {
            what: "price ratios",
            expected: a.len(),
            got: y.len(),
        });
    }
    if y.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("price ratios must be positive".into()));
    }
    Allocation::from_unnormalized(a.weights().iter().zip(y).map(|(w, r)| w * r).collect())
}

/// Multiplicative wealth factor surviving the rebalance:
/// `1 − c · Σ_i |w_prev_i − a_i|`.
pub fn cost_factor(w_prev: &Allocation, a: &Allocation, commission_rate: f64) -> f64 {
    let turnover: f64 = w_prev
        .weights()
        .iter()
        .zip(a.weights())
        .map(|(w, ai)| (w - ai).abs())
        .sum();
    1.0 - commission_rate * turnover
}

/// Log rate of return over one period:
/// `ln[ (1 − c Σ|w_prev − a|) · Σ_i a_i y_i ]`.
pub fn portfolio_reward(
    w_prev: &Allocation,
    a: &Allocation,
    y: &[f64],
    commission_rate: f64,
) -> Result<f64> {
    if y.len() != a.len() || w_prev.len() != a.len() {
        return Err(Error::Dimension {
            what: "portfolio reward inputs",
            expected: a.len(),
            got: y.len().max(w_prev.len()),
        });
    }
    let mu = cost_factor(w_prev, a, commission_rate);
    if mu <= 0.0 {
        return Err(Error::Domain(format!(
            "commission wipes out the portfolio: cost factor {mu} <= 0"
        )));
    }
    let growth: f64 = a.weights().iter().zip(y).map(|(ai, yi)| ai * yi).sum();
    Ok((mu * growth).ln())
}

/// Reward and its gradient with respect to the allocation.
///
/// The |·| inside the cost factor is replaced by `√((w−a)² + δ²)` in the
/// derivative only; the value uses the exact absolute value.
pub fn portfolio_reward_with_grad(
    w_prev: &Allocation,
    a: &Allocation,
    y: &[f64],
    commission_rate: f64,
) -> Result<(f64, Vec<f64>)> {
    let value = portfolio_reward(w_prev, a, y, commission_rate)?;
    let mu = cost_factor(w_prev, a, commission_rate);
    let growth: f64 = a.weights().iter().zip(y).map(|(ai, yi)| ai * yi).sum();
    let grad = (0..a.len())
        .map(|i| {
            let diff = a[i] - w_prev[i];
            let smooth_sign = diff / (diff * diff + TURNOVER_SMOOTHING * TURNOVER_SMOOTHING).sqrt();
            y[i] / growth - commission_rate * smooth_sign / mu
        })
        .collect();
    Ok((value, grad))
}

/// State row for one entity: previous weight, then the close / high / low
/// ratio windows `v_{n−H} / v_{n−1}, …, v_{n−2} / v_{n−1}` per channel.
///
/// `close`, `high`, `low` are period-major matrices over the task's own
/// entity ordering; `n` is the period index within them.
pub fn portfolio_state(
    close: &[Vec<f64>],
    high: &[Vec<f64>],
    low: &[Vec<f64>],
    n: usize,
    w_prev: &Allocation,
    window: usize,
) -> Result<StateMatrix> {
    if n < window {
        return Err(Error::InsufficientData(format!(
            "period {n} has fewer than H = {window} prices of history"
        )));
    }
    let m = w_prev.len();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = Vec::with_capacity(1 + 3 * (window - 1));
        row.push(w_prev[i]);
        for channel in [close, high, low] {
            let anchor = channel[n - 1][i];
            for k in (n - window)..(n - 1) {
                row.push(channel[k][i] / anchor);
            }
        }
        rows.push(row);
    }
    StateMatrix::new(rows)
}

/// Scorer: maximum over the minibatch of the ℓ∞ distance between the policy
/// allocation and the equal-weight allocation.
pub fn scorer_deviation(allocations: &[Allocation]) -> Result<f64> {
    if allocations.is_empty() {
        return Err(Error::Domain("scorer needs a nonempty minibatch".into()));
    }
    let uniform = uniform_allocation(allocations[0].len())?;
    Ok(allocations
        .iter()
        .map(|a| a.linf_distance(&uniform))
        .fold(0.0, f64::max))
}

/// Mean-deviation scorer variant, selectable by config; not the default.
pub fn scorer_deviation_mean(allocations: &[Allocation]) -> Result<f64> {
    if allocations.is_empty() {
        return Err(Error::Domain("scorer needs a nonempty minibatch".into()));
    }
    let uniform = uniform_allocation(allocations[0].len())?;
    let total: f64 = allocations.iter().map(|a| a.linf_distance(&uniform)).sum();
    Ok(total / allocations.len() as f64)
}

/// `count` tasks, each a uniformly random `task_size`-subset of the universe.
pub fn make_tasks<R: Rng + ?Sized>(
    universe: usize,
    task_size: usize,
    count: usize,
    buffer_capacity: usize,
    rng: &mut R,
) -> Result<Vec<Task>> {
    if task_size > universe {
        return Err(Error::Domain(format!(
            "task size {task_size} exceeds universe {universe}"
        )));
    }
    (0..count)
        .map(|id| {
            let mut all: Vec<usize> = (0..universe).collect();
            all.shuffle(rng);
            all.truncate(task_size);
            Task::new(id, all, buffer_capacity)
        })
        .collect()
}
