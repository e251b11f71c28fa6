//! Actor-critic laboratory for hypernetwork-composed Q-functions and
//! context-conditioned meta-policies.

pub mod critic;
pub mod fidelity;
pub mod gradcheck;
pub mod hypernet;
pub mod meta;
pub mod nn;
pub mod policy;
pub mod prop1;
pub mod rl;
pub mod rng;
pub mod tensor;
pub mod trainer;
