//! Parameter containers, plain MLP stacks, initializers and the optimizer.

mod adam;
pub mod init;
mod mlp;
mod param;

pub use adam::Adam;
pub use mlp::{Activation, Mlp, MlpPreset};
pub use param::{NamedTensor, ParamSet};
