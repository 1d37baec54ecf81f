//! Regularized viscous-plastic sea-ice dynamics in Lagrangian coordinates.
//!
//! The crate discretizes the momentum balance for the ice velocity together
//! with the balance laws for mean thickness `h` and concentration `a` on a
//! rectangular node grid. Solutions are built the constructive way: a
//! frozen-coefficient linear problem is solved exactly in time, and the
//! nonlinear remainder, written in the coordinates that follow the ice, is
//! handled by Picard iteration. A separate Eulerian solver serves as an
//! independent cross-check.
//!
//! Module map:
//! - [`fields`]: grids, states, parameters, forcing.
//! - [`rheology`]: pointwise constitutive algebra.
//! - [`thermo`]: thermodynamic sources.
//! - [`lagrangian`]: flow map and its inverse gradient.
//! - [`operators`]: finite differences and sparse operator assembly.
//! - [`linear_solver`]: time stepping for the frozen linear problem.
//! - [`nonlinear`]: transformed operators and the Picard loop.
//! - [`eulerian`]: reference solver in the fixed frame.
//! - [`analysis`]: discrete norms, manufactured solutions, cross-checks.
//! - [`config`], [`scenario`], [`io`], [`cli`]: plumbing.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod eulerian;
pub mod fields;
pub mod io;
pub mod lagrangian;
pub mod linear_solver;
pub mod nonlinear;
pub mod operators;
pub mod rheology;
pub mod scenario;
pub mod sparse;
pub mod thermo;

pub use error::{Error, Result};
pub use fields::{Grid, Mat2, RheologyParams, StateField, Vec2};
