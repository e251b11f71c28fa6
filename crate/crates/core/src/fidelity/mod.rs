//! Non-parametric action-gradient estimates from perturbed rollouts and
//! their agreement with a critic's parametric gradient.

mod lmse;
mod sweep;

pub use lmse::{cosine_similarity, lmse_fit, FidelityError};
pub use sweep::{
    cs_sweep, evaluate_states, local_linearity_check, perturbed_returns, write_sweep_csv, CsProtocol, SweepRecord,
};
