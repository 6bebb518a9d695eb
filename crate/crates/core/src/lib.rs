//! Single-look multi-master SAR tomography.
//!
//! The crate models interferometric stacks whose pairing graph has no common
//! master, recovers sparse reflectivity profiles along elevation with
//! nonconvex solvers, selects the model order with an information criterion
//! and refines scatterer elevations off the grid.

pub mod bicram;
pub mod error;
pub mod inversion;
pub mod estimate;
pub mod l1rls;
pub mod linalg;
pub mod nls;
pub mod offgrid;
pub mod selection;
pub mod simulator;
pub mod stack_model;

pub use error::{Error, Result};
pub use estimate::{ReflectivityEstimate, SolverReport, Termination};
