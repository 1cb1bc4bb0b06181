//! Domain grids, Dirichlet assembly, discrete Sobolev norms, extension and smoothing.

pub mod assembly;
pub mod extension;
pub mod grid;
pub mod norms;
pub mod steklov;

pub use assembly::{assemble_effective, assemble_heterogeneous, DiscreteOperator, OperatorLabel, SobolevGrams};
pub use extension::{ExtensionOperator, ReflectionKind};
pub use grid::{BoxGrid, DomainGrid};
pub use norms::{sobolev_norm, NormKind};
pub use steklov::steklov_smooth;
