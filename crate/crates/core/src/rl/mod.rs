//! Environments, rollouts and the replay buffer.

mod buffer;
mod lqr;
mod point_mass;
mod rollout;

pub use buffer::{Batch, ReplayBuffer};
pub use lqr::Lqr;
pub use point_mass::{PointMass, TaskFamily};
pub use rollout::{rollout, rollout_from, Env, Trajectory, Transition};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("environment diverged at step {step}: non-finite state")]
    Divergence { step: usize },
    #[error("value iteration did not converge after {iterations} iterations (closed loop unstable)")]
    Instability { iterations: usize },
    #[error("replay buffer holds {len} transitions, cannot draw a batch of {batch}")]
    Underfull { len: usize, batch: usize },
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("trajectory csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RlError>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(RlError::Dimension { what, expected, got })
    }
}
