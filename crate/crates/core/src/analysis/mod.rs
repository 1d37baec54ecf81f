//! Norms, seeded rheology sweeps, manufactured-solution studies and the
//! cross-pipeline comparison.

pub mod cross;
pub mod mms;
pub mod norms;
pub mod probe;
