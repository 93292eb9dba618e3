//! Per-task replay buffers of time-ordered transitions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::simplex::Allocation;
use crate::state::StateMatrix;

/// One stored environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateMatrix,
    pub action: Allocation,
    pub reward: f64,
    pub next_state: StateMatrix,
    pub time_index: usize,
}

impl Transition {
    pub fn new(
        state: StateMatrix,
        action: Allocation,
        reward: f64,
        next_state: StateMatrix,
        time_index: usize,
    ) -> Result<Self> {
        if action.len() != state.entity_count() {
            return Err(Error::Dimension {
                what: "transition action",
                expected: state.entity_count(),
                got: action.len(),
            });
        }
        Ok(Transition {
            state,
            action,
            reward,
            next_state,
            time_index,
        })
    }
}

/// Bounded, insertion-ordered transition store. Oldest entries evict first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    transitions: std::collections::VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            transitions: std::collections::VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.transitions.get(i)
    }

    /// Samples the start index of a consecutive batch of length `batch_size`.
    ///
    /// The offset of the start from the most recent admissible start follows a
    /// geometric distribution with parameter `p_geo`, truncated to the buffer.
    pub fn sample_start_geometric<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        p_geo: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let n = self.transitions.len();
        if n < batch_size || batch_size == 0 {
            return Err(Error::InsufficientData(format!(
                "buffer holds {n} transitions, batch of {batch_size} requested"
            )));
        }
        let max_offset = n - batch_size;
        Ok(max_offset - truncated_geometric(p_geo, max_offset, rng))
    }

    /// Uniformly random admissible start index.
    pub fn sample_start_uniform<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let n = self.transitions.len();
        if n < batch_size || batch_size == 0 {
            return Err(Error::InsufficientData(format!(
                "buffer holds {n} transitions, batch of {batch_size} requested"
            )));
        }
        Ok(rng.gen_range(0..=n - batch_size))
    }

    /// The batch starting at `start`, in stored order.
    pub fn window(&self, start: usize, batch_size: usize) -> Result<Vec<&Transition>> {
        if start + batch_size > self.transitions.len() {
            return Err(Error::InsufficientData(format!(
                "window [{start}, {}) exceeds buffer of {}",
                start + batch_size,
                self.transitions.len()
            )));
        }
        Ok((start..start + batch_size)
            .map(|i| &self.transitions[i])
            .collect())
    }
}

/// Recency-biased consecutive batch: offset from the newest admissible start
/// is truncated-geometric with parameter `p_geo`. Batch order preserved.
pub fn buffer_sample_geometric<'a, R: Rng + ?Sized>(
    buf: &'a ReplayBuffer,
    batch_size: usize,
    p_geo: f64,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    let start = buf.sample_start_geometric(batch_size, p_geo, rng)?;
    buf.window(start, batch_size)
}

/// Geometric draw (support 0, 1, 2, …) truncated to `0..=max_offset`.
///
/// Sampled by inverting the truncated CDF so a single uniform draw suffices.
fn truncated_geometric<R: Rng + ?Sized>(p: f64, max_offset: usize, rng: &mut R) -> usize {
    if max_offset == 0 {
        return 0;
    }
    let p = p.clamp(f64::MIN_POSITIVE, 1.0);
    if p >= 1.0 {
        return 0;
    }
    let q = 1.0 - p;
    // Total mass of the truncated support.
    let total = 1.0 - q.powi(max_offset as i32 + 1);
    let u: f64 = rng.gen::<f64>() * total;
    // Inverse CDF: smallest k with 1 - q^{k+1} > u.
    let k = ((1.0 - u).ln() / q.ln() - 1.0).ceil() as i64;
    (k.max(0) as usize).min(max_offset)
}

/// Truncated-geometric pmf over offsets `0..=max_offset`.
pub fn truncated_geometric_pmf(p: f64, max_offset: usize) -> Vec<f64> {
    let q = 1.0 - p;
    let total = 1.0 - q.powi(max_offset as i32 + 1);
    (0..=max_offset)
        .map(|k| p * q.powi(k as i32) / total)
        .collect()
}
