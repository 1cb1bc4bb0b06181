//! Sweeps, rate fits, operator norms and reports.

pub mod checks;
pub mod config;
pub mod data;
pub mod gaps;
pub mod opnorm;
pub mod rates;
pub mod report;
pub mod sweep;

pub use config::ExperimentConfig;
pub use gaps::{gap_sweep, operator_function_gap, GapKind, GapReport};
pub use opnorm::{operator_norm, Gram, LinearMap, OpNormMethod, OpNormOptions, OpNormResult};
pub use rates::{fit_rate, RateFit};
pub use sweep::{run_sweep, solve_point, ConvergenceReport, Experiment};
