//! Grid-based solver for optimal control problems and their Hamilton-Jacobi
//! equations using a preconditioned primal-dual hybrid gradient iteration.

pub mod cli;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod pdhg;
pub mod precond;
pub mod problem;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{Boundary, Field, Grid, SpatialAxis};
pub use precond::HelmholtzSolver;
pub use problem::{Branch, ControlProblem, Lagrangian, TerminalCost};
