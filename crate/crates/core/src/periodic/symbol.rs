use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, is_real, realify, spectral_norm, C64};
use crate::periodic::coefficient::MatrixInput;

/// Rank failure threshold relative to alpha1.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Smallest admissible number of sphere samples per dimension.
pub fn min_sphere_samples(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 720,
        _ => 4000,
    }
}

/// Symbol of the first-order operator b(D) = Σ_j b_j D_j in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// b(D) = D (d = 1) or the gradient (m = d, n = 1).
    Gradient { dim: usize },
    /// Explicit m×n matrices b_1, …, b_d.
    Matrices { matrices: Vec<MatrixInput> },
}

impl SymbolSpec {
    pub fn matrices(&self) -> Result<Vec<DMatrix<C64>>> {
        match self {
            SymbolSpec::Gradient { dim } => {
                if *dim == 0 {
                    return Err(Error::Dimension("gradient symbol needs dim >= 1".into()));
                }
                Ok((0..*dim)
                    .map(|j| DMatrix::from_fn(*dim, 1, |i, _| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)))
                    .collect())
            }
            SymbolSpec::Matrices { matrices } => matrices.iter().map(MatrixInput::to_rect).collect(),
        }
    }

    pub fn build(&self) -> Result<SymbolFamily> {
        let mats = self.matrices()?;
        let samples = min_sphere_samples(mats.len()).max(720);
        SymbolFamily::new(mats, samples)
    }
}

/// Constant matrices b_1, …, b_d of b(D) with their ellipticity constants.
#[derive(Clone, Debug)]
pub struct SymbolFamily {
    matrices: Vec<DMatrix<C64>>,
    alpha0: f64,
    alpha1: f64,
}

impl SymbolFamily {
    pub fn new(matrices: Vec<DMatrix<C64>>, sphere_samples: usize) -> Result<Self> {
        let (alpha0, alpha1) = symbol_bounds(&matrices, sphere_samples)?;
        Ok(SymbolFamily { matrices, alpha0, alpha1 })
    }

    pub fn gradient(d: usize) -> Self {
        SymbolSpec::Gradient { dim: d }.build().expect("gradient symbol is elliptic")
    }

    pub fn dim(&self) -> usize {
        self.matrices.len()
    }
    pub fn m(&self) -> usize {
        self.matrices[0].nrows()
    }
    pub fn n(&self) -> usize {
        self.matrices[0].ncols()
    }
    pub fn matrices(&self) -> &[DMatrix<C64>] {
        &self.matrices
    }
    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }
    pub fn is_complex(&self) -> bool {
        self.matrices.iter().any(|b| !is_real(b))
    }

    /// b(θ) = Σ_j θ_j b_j.
    pub fn at(&self, theta: &[f64]) -> DMatrix<C64> {
        symbol_at(&self.matrices, theta)
    }

    /// Real matrices acting on (realified) component vectors.
    pub fn real_matrices(&self, complex: bool) -> Vec<DMatrix<f64>> {
        self.matrices
            .iter()
            .map(|b| if complex { realify(b) } else { b.map(|z| z.re) })
            .collect()
    }
}

fn symbol_at(matrices: &[DMatrix<C64>], theta: &[f64]) -> DMatrix<C64> {
    let (m, n) = matrices[0].shape();
    matrices
        .iter()
        .zip(theta)
        .fold(DMatrix::zeros(m, n), |acc, (b, t)| acc + b * C64::new(*t, 0.0))
}

fn extremes(matrices: &[DMatrix<C64>], theta: &[f64]) -> (f64, f64) {
    let b = symbol_at(matrices, theta);
    let ev = hermitian_eigenvalues(&(b.adjoint() * b));
    (ev[0], ev[ev.len() - 1])
}

/// Golden-section search of `f` on [a, b]; returns the minimizing value.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Ellipticity constants α₀ = min, α₁ = max over unit θ of the spectrum of b(θ)*b(θ).
///
/// d = 1 uses θ = ±1; d = 2 scans `sphere_samples` angles and refines both extrema
/// by golden-section search; d ≥ 3 uses a Fibonacci-type point set.
pub fn symbol_bounds(matrices: &[DMatrix<C64>], sphere_samples: usize) -> Result<(f64, f64)> {
    let d = matrices.len();
    if d == 0 {
        return Err(Error::Dimension("symbol needs at least one matrix".into()));
    }
    let (m, n) = matrices[0].shape();
    if matrices.iter().any(|b| b.shape() != (m, n)) {
        return Err(Error::Dimension("all symbol matrices must share one shape".into()));
    }
    if m < n {
        return Err(Error::Dimension(format!("symbol matrices are {m}x{n}; need m >= n")));
    }
    let minimum = min_sphere_samples(d);
    if sphere_samples < minimum {
        return Err(Error::InvalidInput(format!(
            "{sphere_samples} sphere samples in dimension {d}; at least {minimum} required"
        )));
    }
    let (alpha0, alpha1) = match d {
        1 => extremes(matrices, &[1.0]),
        2 => {
            // b(-θ) = -b(θ), so half the circle suffices.
            let step = PI / sphere_samples as f64;
            let angle = |k: usize| k as f64 * step;
            let mut lo = (f64::INFINITY, 0.0);
            let mut hi = (f64::NEG_INFINITY, 0.0);
            for k in 0..sphere_samples {
                let a = angle(k);
                let (e0, e1) = extremes(matrices, &[a.cos(), a.sin()]);
                if e0 < lo.0 {
                    lo = (e0, a);
                }
                if e1 > hi.0 {
                    hi = (e1, a);
                }
            }
            let f_lo = |a: f64| extremes(matrices, &[a.cos(), a.sin()]).0;
            let f_hi = |a: f64| -extremes(matrices, &[a.cos(), a.sin()]).1;
            let a0 = lo.0.min(golden_min(f_lo, lo.1 - step, lo.1 + step));
            let a1 = hi.0.max(-golden_min(f_hi, hi.1 - step, hi.1 + step));
            (a0, a1)
        }
        _ => {
            let mut a0 = f64::INFINITY;
            let mut a1 = f64::NEG_INFINITY;
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..sphere_samples {
                // Spiral points on S^2 padded by zeros for d > 3.
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / sphere_samples as f64;
                let r = (1.0 - z * z).sqrt();
                let mut theta = vec![0.0; d];
                theta[0] = r * (golden * k as f64).cos();
                theta[1] = r * (golden * k as f64).sin();
                theta[2] = z;
                let (e0, e1) = extremes(matrices, &theta);
                a0 = a0.min(e0);
                a1 = a1.max(e1);
            }
            (a0, a1)
        }
    };
    if !(alpha1 > 0.0) || alpha0 < RANK_THRESHOLD * alpha1 {
        return Err(Error::SymbolRank { alpha0, alpha1 });
    }
    // |b_j| ≤ α₁^{1/2} follows from taking θ = e_j; guard against sampling gaps.
    let max_bj = matrices.iter().map(spectral_norm).fold(0.0, f64::max);
    Ok((alpha0.max(0.0), alpha1.max(max_bj * max_bj)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(m: usize, n: usize, v: &[f64]) -> DMatrix<C64> {
        DMatrix::from_row_slice(m, n, v).map(|x| C64::new(x, 0.0))
    }

    #[test]
    fn scalar_derivative() {
        let (a0, a1) = symbol_bounds(&[real(1, 1, &[1.0])], 2).unwrap();
        assert_eq!((a0, a1), (1.0, 1.0));
    }

    #[test]
    fn anisotropic_gradient_against_dense_scan() {
        let mats = [real(2, 1, &[1.0, 0.0]), real(2, 1, &[0.0, 2.0])];
        let (a0, a1) = symbol_bounds(&mats, 720).unwrap();
        // Oracle: θ₁² + 4θ₂² on a dense circle scan.
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for k in 0..100_000 {
            let a = 2.0 * PI * k as f64 / 100_000.0;
            let v = a.cos().powi(2) + 4.0 * a.sin().powi(2);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!((a0 - lo).abs() < 1e-10 && (a1 - hi).abs() < 1e-10);
        assert!((a0 - 1.0).abs() < 1e-12 && (a1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_symbol_rejected() {
        let mats = [real(1, 1, &[1.0]), real(1, 1, &[0.0])];
        let err = symbol_bounds(&mats, 720).unwrap_err();
        assert!(err.to_string().contains("symbol rank condition violated"));
    }

    #[test]
    fn too_few_samples_rejected() {
        let mats = [real(2, 1, &[1.0, 0.0]), real(2, 1, &[0.0, 1.0])];
        assert!(symbol_bounds(&mats, 10).is_err());
    }

    #[test]
    fn refinement_finds_off_grid_minimum() {
        // Minimum direction at an angle that is not a multiple of π/720.
        let c = 0.3_f64.cos();
        let s = 0.3_f64.sin();
        let mats = [real(2, 1, &[c, -2.0 * s]), real(2, 1, &[s, 2.0 * c])];
        let (a0, a1) = symbol_bounds(&mats, 720).unwrap();
        assert!((a0 - 1.0).abs() < 1e-12 && (a1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_symbol_is_isotropic() {
        let s = SymbolFamily::gradient(2);
        assert_eq!((s.m(), s.n(), s.dim()), (2, 1, 2));
        assert!((s.alpha0() - 1.0).abs() < 1e-14 && (s.alpha1() - 1.0).abs() < 1e-14);
    }
}
