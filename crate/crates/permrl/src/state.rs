//! Per-entity observation matrices and index permutations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::Allocation;

/// One observation vector per entity for a single time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    rows: Vec<Vec<f64>>,
}

impl StateMatrix {
    /// Validates that all rows have equal length.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("state matrix must have at least one row".into()));
        }
        let width = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Dimension {
                    what: "state matrix row",
                    expected: width,
                    got: rows[i].len(),
                });
            }
        }
        Ok(StateMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Number of entities.
    pub fn entity_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_width(&self) -> usize {
        self.rows[0].len()
    }
}

/// A bijection on `{0, …, m-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Validates that `mapping` is a bijection.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let m = mapping.len();
        let mut seen = vec![false; m];
        for &j in &mapping {
            if j >= m || seen[j] {
                return Err(Error::Domain(format!(
                    "mapping {mapping:?} is not a bijection on 0..{m}"
                )));
            }
            seen[j] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            mapping: (0..m).collect(),
        }
    }

    /// Uniformly random permutation.
    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let mut mapping: Vec<usize> = (0..m).collect();
        mapping.shuffle(rng);
        Permutation { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Image of index `i`.
    pub fn map(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { mapping: inv }
    }

    /// Reorders a slice: output index `σ(i)` holds input element `i`.
    pub fn apply_slice<T: Clone>(&self, xs: &[T]) -> Result<Vec<T>> {
        if xs.len() != self.mapping.len() {
            return Err(Error::Dimension {
                what: "permutation input",
                expected: self.mapping.len(),
                got: xs.len(),
            });
        }
        let mut out = xs.to_vec();
        for (i, x) in xs.iter().enumerate() {
            out[self.mapping[i]] = x.clone();
        }
        Ok(out)
    }

    /// Permutes allocation weights the same way as entity rows.
    pub fn apply_allocation(&self, a: &Allocation) -> Result<Allocation> {
        Allocation::new(self.apply_slice(a.weights())?)
    }
}

/// Reorders entity rows: output row `σ(i)` equals input row `i`.
pub fn apply_permutation(x: &StateMatrix, sigma: &Permutation) -> Result<StateMatrix> {
    StateMatrix::new(sigma.apply_slice(x.rows())?)
}
