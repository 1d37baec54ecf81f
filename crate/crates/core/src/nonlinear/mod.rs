//! The nonlinear system in Lagrangian coordinates: transformed operators,
//! right-hand sides and the Picard iteration.

mod picard;
pub mod rhs;
pub mod transformed;

pub use picard::{
    dependence_experiment, flow_maps, geometries, picard_solve, picard_with_operator, rhs_trajectory,
    transformed_residual, DependenceRow, IterRecord, PicardConfig, PicardOutcome, PicardState, Termination,
};
pub use rhs::{assemble_rhs, drag, lagrangian_forcing, RhsContext};
pub use transformed::{Geometry, StrainDerivative};
