//! Periodic homogenization of Dirichlet hyperbolic systems: cell problems,
//! effective operators, first-order approximations and convergence studies.

extern crate openblas_src;

pub mod approximation;
pub mod cell;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod periodic;

pub use error::{Error, Result};
