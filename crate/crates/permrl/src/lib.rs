//! Permutation-invariant multi-task reinforcement learning for sequential
//! resource allocation.
//!
//! The crate provides:
//!
//! * a permutation-invariant recurrent policy over sets of entities
//!   ([`policy`]), with exact reverse-mode gradients;
//! * least-squares policy iteration with truncated linear value estimates
//!   ([`lspi`]);
//! * prioritized task sampling with importance-weighted corrections
//!   ([`sampler`]) and the surrounding training loop ([`trainer`]);
//! * two environments: an entropy-regularized synthetic allocation problem
//!   and a log-return portfolio simulator over daily price series
//!   ([`envs`]);
//! * experiment drivers and CSV/JSON reporting ([`harness`]).
//!
//! Start with the examples directory for runnable entry points, or the
//! `permrl` binary for the batch experiment CLI.

pub mod envs;
pub mod error;
pub mod harness;
pub mod lspi;
pub mod policy;
pub mod replay;
pub mod sampler;
pub mod simplex;
pub mod state;
pub mod stats;
pub mod task;
pub mod trainer;

pub use error::{Error, Result};
pub use simplex::{uniform_allocation, Allocation};
pub use state::{apply_permutation, Permutation, StateMatrix};
