//! Time-sampled right-hand sides.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::assembly::SobolevGrams;
use crate::domain::norms::{sobolev_norm, NormKind};
use crate::error::{Error, Result};

/// Minimum number of forcing samples per unit time.
pub const MIN_SAMPLES_PER_UNIT: usize = 64;

/// Scalar profile sampled on the uniform grid t0, t0 + dt, ...; linear in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeProfile {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeProfile {
    /// Samples `p` on [0, t_end] with `per_unit` samples per unit time.
    pub fn sample(p: impl Fn(f64) -> f64, t_end: f64, per_unit: usize) -> Result<Self> {
        let dt = sample_step(t_end, per_unit)?;
        let n = (t_end / dt).round() as usize;
        Ok(TimeProfile {
            t0: 0.0,
            dt,
            values: (0..=n).map(|i| p(i as f64 * dt)).collect(),
        })
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        let (i, w) = locate(self.t0, self.dt, self.values.len(), t)?;
        Ok(if w == 0.0 { self.values[i] } else { (1.0 - w) * self.values[i] + w * self.values[i + 1] })
    }

    /// ∫_{t0}^{t} |p| for the piecewise-linear profile (exact, zero crossings included).
    pub fn l1_norm(&self, t: f64) -> Result<f64> {
        if t > self.end() + 1e-12 * self.end().max(1.0) || t < self.t0 {
            return Err(Error::TimeOutOfRange {
                time: t,
                start: self.t0,
                end: self.end(),
            });
        }
        let mut acc = 0.0;
        for i in 0..self.values.len().saturating_sub(1) {
            let a = self.t0 + i as f64 * self.dt;
            if a >= t {
                break;
            }
            let b = (a + self.dt).min(t);
            let pa = self.values[i];
            let pb = self.at(b)?;
            acc += abs_linear_integral(pa, pb, b - a);
        }
        Ok(acc)
    }
}

/// ∫_0^h |p| for p linear from pa to pb.
fn abs_linear_integral(pa: f64, pb: f64, h: f64) -> f64 {
    if pa * pb >= 0.0 {
        0.5 * h * (pa.abs() + pb.abs())
    } else {
        0.5 * h * (pa * pa + pb * pb) / (pa.abs() + pb.abs())
    }
}

/// Uniform sample step not larger than 1/per_unit that divides t_end.
pub fn sample_step(t_end: f64, per_unit: usize) -> Result<f64> {
    if per_unit < MIN_SAMPLES_PER_UNIT {
        return Err(Error::InvalidInput(format!(
            "forcing needs at least {MIN_SAMPLES_PER_UNIT} samples per unit time, got {per_unit}"
        )));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("sampling horizon must be positive, got {t_end}")));
    }
    let n = (t_end * per_unit as f64).ceil().max(1.0);
    Ok(t_end / n)
}

/// Sample interval index and weight of t on a uniform grid of `len` samples.
pub fn locate(t0: f64, dt: f64, len: usize, t: f64) -> Result<(usize, f64)> {
    let end = t0 + dt * (len.saturating_sub(1)) as f64;
    let slack = 1e-12 * end.abs().max(1.0);
    if len == 0 || t < t0 - slack || t > end + slack {
        return Err(Error::TimeOutOfRange { time: t, start: t0, end });
    }
    if len == 1 {
        return Ok((0, 0.0));
    }
    let s = ((t - t0) / dt).clamp(0.0, (len - 1) as f64);
    let i = (s.floor() as usize).min(len - 2);
    Ok((i, s - i as f64))
}

/// Right-hand side F(x, t) of the wave problems.
#[derive(Clone, Debug, Default)]
pub enum Forcing {
    #[default]
    None,
    /// F(x, t) = f(x)·p(t) with f an all-node field.
    Separable { field: DVector<f64>, profile: TimeProfile },
}

impl Forcing {
    pub fn is_none(&self) -> bool {
        matches!(self, Forcing::None)
    }

    /// ‖F‖_{L₁((0,t);H¹)}.
    pub fn l1_h1_norm(&self, grams: &SobolevGrams, t: f64) -> Result<f64> {
        match self {
            Forcing::None => Ok(0.0),
            Forcing::Separable { field, profile } => Ok(sobolev_norm(field, grams, NormKind::H1)? * profile.l1_norm(t)?),
        }
    }

    /// Load functional (interior rows of M·F) of the spatial factor.
    pub fn spatial_load(&self, grams: &SobolevGrams) -> Option<DVector<f64>> {
        match self {
            Forcing::None => None,
            Forcing::Separable { field, .. } => {
                let f = grams.restrict(field);
                Some(f.component_mul(&DVector::from_column_slice(&grams.mass)))
            }
        }
    }

    pub fn profile(&self) -> Option<&TimeProfile> {
        match self {
            Forcing::None => None,
            Forcing::Separable { profile, .. } => Some(profile),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_interpolation_and_range() {
        let p = TimeProfile::sample(|t| 2.0 * t, 1.0, 64).unwrap();
        assert_eq!(p.values.len(), 65);
        assert!((p.at(0.3).unwrap() - 0.6).abs() < 1e-14);
        assert!(p.at(1.5).is_err());
        assert!(TimeProfile::sample(|t| t, 1.0, 10).is_err());
    }

    #[test]
    fn l1_norm_handles_sign_changes() {
        let p = TimeProfile {
            t0: 0.0,
            dt: 1.0,
            values: vec![1.0, -1.0],
        };
        assert!((p.l1_norm(1.0).unwrap() - 0.5).abs() < 1e-15);
        let q = TimeProfile::sample(|t| (2.0 * std::f64::consts::PI * t).cos(), 1.0, 256).unwrap();
        // ∫|cos 2πt| over a period is 2/π; PL interpolation error is O(dt²).
        assert!((q.l1_norm(1.0).unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-4);
    }
}
