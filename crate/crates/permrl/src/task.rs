//! A task: an ordered subset of the global entity universe plus its replay
//! buffer, difficulty score, and rollout cursor.

use crate::error::{Error, Result};
use crate::replay::ReplayBuffer;

#[derive(Debug, Clone)]
pub struct Task {
    pub id: usize,
    /// Ordered subset of global universe indices.
    pub entities: Vec<usize>,
    pub buffer: ReplayBuffer,
    score: f64,
    /// Rollout cursor n_t within the episode, 1-based.
    pub cursor: usize,
}

impl Task {
    pub fn new(id: usize, entities: Vec<usize>, buffer_capacity: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &e in &entities {
            if !seen.insert(e) {
                return Err(Error::Domain(format!(
                    "task {id} has duplicate entity index {e}"
                )));
            }
        }
        if entities.is_empty() {
            return Err(Error::Domain(format!("task {id} has no entities")));
        }
        Ok(Task {
            id,
            entities,
            buffer: ReplayBuffer::new(buffer_capacity),
            score: 0.0,
            cursor: 1,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn set_score(&mut self, score: f64) -> Result<()> {
        if !score.is_finite() || score < 0.0 {
            return Err(Error::Domain(format!(
                "task score must be finite and nonnegative, got {score}"
            )));
        }
        self.score = score;
        Ok(())
    }
}
