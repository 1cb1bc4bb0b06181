//! Wave evolution on discrete operators: exact modal calculus with a leapfrog fallback,
//! and the boundary-layer discrepancy.

pub mod discrepancy;
pub mod forcing;
pub mod leapfrog;
pub mod modal;
pub mod trajectory;

pub use discrepancy::{solve_discrepancy, DiscrepancyResult};
pub use forcing::{Forcing, TimeProfile};
pub use leapfrog::leapfrog_evolve;
pub use modal::{evolve, spectral_decompose, ModalBasis, ModalLoad, ModalSolution};
pub use trajectory::{ProblemTag, Trajectory};
