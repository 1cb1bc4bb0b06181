use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::assembly::DiscreteOperator;
use crate::error::{Error, Result};
use crate::linalg::csr_matvec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemTag {
    Heterogeneous { epsilon: f64 },
    Effective,
    /// w_ε itself.
    Discrepancy { epsilon: f64 },
    /// w_ε - εK(ε)u₀, the zero-boundary difference.
    DiscrepancyDifference { epsilon: f64 },
}

/// All-node displacement and velocity fields at increasing times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub tag: ProblemTag,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Discrete energy ⟨v, Mv⟩ + ⟨u, Ku⟩ per time on interior dofs.
    pub fn energy(&self, op: &DiscreteOperator) -> Vec<f64> {
        let m = &op.grams.mass;
        self.states
            .iter()
            .zip(&self.velocities)
            .map(|(u, v)| {
                let ui = op.grams.restrict(u);
                let vi = op.grams.restrict(v);
                let kin: f64 = vi.iter().zip(m).map(|(a, w)| w * a * a).sum();
                kin + ui.dot(&csr_matvec(&op.stiffness, &ui))
            })
            .collect()
    }

    /// Index of time `t` (exact match up to 1e-12 relative).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::MissingSamples(format!("time {t} is not in the trajectory")))
    }
}

/// Checks that requested output times are finite, nonnegative and nondecreasing.
pub fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidInput(format!("output times must be finite and nonnegative: {times:?}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!("output times must be nondecreasing: {times:?}")));
    }
    Ok(())
}
