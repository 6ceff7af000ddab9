//! Two-phase (water / DNAPL) flow in heterogeneous porous media with an
//! IMPES scheme on structured grids.
//!
//! The pipeline is: [`scenario::Scenario`] → [`model::Model`] →
//! [`simulation::run`] → [`simulation::SimulationResult`], with
//! [`analysis`] for mass and plume diagnostics and [`io`] for files.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod benchmark;
pub mod constitutive;
pub mod error;
pub mod grid;
pub mod interface;
pub mod io;
pub mod model;
pub mod pressure;
pub mod saturation;
pub mod scenario;
pub mod simulation;

pub use error::{Error, Result, ValidationIssue};
pub use model::Model;
pub use scenario::Scenario;
pub use simulation::{run, SimulationResult, SimulationState};
