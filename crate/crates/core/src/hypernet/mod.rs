//! Hypernetworks: a primary network maps a meta-input `z` to the weights of
//! a small gain-modulated dynamic network evaluated on a base input `x`.

mod audit;
mod dynamic;
mod primary;

pub use audit::{init_audit, weight_tv_distance, AuditError, InitAudit, LayerAudit};
pub use dynamic::{dynamic_forward, DynamicLayer, DynamicSpec, DynamicWeights, GroupKind, WeightGroup};
pub use primary::{HyperNet, InitScheme, PrimaryConfig};

#[cfg(test)]
mod tests;
