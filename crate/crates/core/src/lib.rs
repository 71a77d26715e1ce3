//! Numerical toolkit for the Lp Brunn–Minkowski theory of log-concave
//! functions on regular grids in dimension 1 and 2.

pub mod error;
pub mod asplund;
pub mod extreal;
pub mod funcgrid;
pub mod inequalities;
pub mod functionals;
pub mod legendre;
pub mod minkowski_solver;
pub mod report;
pub mod variation;
mod serial;

pub use error::{Error, Result};
pub use extreal::ExtReal;
pub use funcgrid::{ClassTag, GridFunction, GridSpec, LogConcaveFn};
pub use report::MarginReport;
