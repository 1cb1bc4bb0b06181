use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigenvalues, is_real, C64};
use crate::periodic::lattice::reduce_unit;

/// Relative Hermitian tolerance for coefficient samples.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Fourier coefficients below this fraction of the largest one are dropped.
const FOURIER_DROP: f64 = 1e-14;

/// A constant matrix in a config file: a scalar (times the identity), real rows,
/// or separate real and imaginary rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Scalar(f64),
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl MatrixInput {
    pub fn to_matrix(&self, m: usize) -> Result<DMatrix<C64>> {
        let rows_to = |re: &Vec<Vec<f64>>, im: Option<&Vec<Vec<f64>>>| -> Result<DMatrix<C64>> {
            let r = re.len();
            if r == 0 || re.iter().any(|row| row.len() != re[0].len()) {
                return Err(Error::Dimension("matrix rows must be non-empty and of equal length".into()));
            }
            let c = re[0].len();
            if let Some(im) = im {
                if im.len() != r || im.iter().any(|row| row.len() != c) {
                    return Err(Error::Dimension("real and imaginary parts differ in shape".into()));
                }
            }
            Ok(DMatrix::from_fn(r, c, |i, j| C64::new(re[i][j], im.map_or(0.0, |im| im[i][j]))))
        };
        let mat = match self {
            MatrixInput::Scalar(s) => return Ok(DMatrix::from_diagonal_element(m, m, C64::new(*s, 0.0))),
            MatrixInput::Real(re) => rows_to(re, None)?,
            MatrixInput::Complex { re, im } => rows_to(re, Some(im))?,
        };
        if mat.nrows() != m || mat.ncols() != m {
            return Err(Error::Dimension(format!("expected a {m}x{m} matrix, got {}x{}", mat.nrows(), mat.ncols())));
        }
        Ok(mat)
    }

    /// Rectangular form, used for symbol matrices.
    pub fn to_rect(&self) -> Result<DMatrix<C64>> {
        match self {
            MatrixInput::Scalar(s) => Ok(DMatrix::from_element(1, 1, C64::new(*s, 0.0))),
            MatrixInput::Real(re) => {
                let m = re.len();
                let n = re.first().map_or(0, |r| r.len());
                if m == 0 || n == 0 || re.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension("matrix rows must be non-empty and of equal length".into()));
                }
                Ok(DMatrix::from_fn(m, n, |i, j| C64::new(re[i][j], 0.0)))
            }
            MatrixInput::Complex { re, im } => {
                let m = re.len();
                let n = re.first().map_or(0, |r| r.len());
                if m == 0 || n == 0 || re.iter().chain(im.iter()).any(|r| r.len() != n) || im.len() != m {
                    return Err(Error::Dimension("complex matrix parts must share a non-empty shape".into()));
                }
                Ok(DMatrix::from_fn(m, n, |i, j| C64::new(re[i][j], im[i][j])))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    PiecewiseConstant,
    Linear,
    Trigonometric,
}

/// Closed-form or tabulated description of a periodic coefficient g(τ) on the cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: MatrixInput,
    },
    /// g = mean + amplitude · Π_j sin(2π k_j τ_j), axes with k_j = 0 omitted.
    Sinusoidal {
        mean: MatrixInput,
        amplitude: MatrixInput,
        wavenumbers: Vec<i32>,
    },
    /// values[0] on τ_axis < 0, values[1] on τ_axis > 0.
    TwoPhase {
        values: [MatrixInput; 2],
        #[serde(default)]
        axis: usize,
    },
    /// Samples at cell-center nodes read from CSV with columns node,row,col,re,im.
    CustomTabulated {
        path: PathBuf,
        grid: Vec<usize>,
        #[serde(default = "default_tabulated_interpolation")]
        interpolation: Interpolation,
    },
}

fn default_tabulated_interpolation() -> Interpolation {
    Interpolation::Linear
}

impl CoefficientSpec {
    pub fn interpolation(&self) -> Interpolation {
        match self {
            CoefficientSpec::Constant { .. } | CoefficientSpec::TwoPhase { .. } => Interpolation::PiecewiseConstant,
            CoefficientSpec::Sinusoidal { .. } => Interpolation::Trigonometric,
            CoefficientSpec::CustomTabulated { interpolation, .. } => *interpolation,
        }
    }

    /// Grid fixed by the coefficient description itself (tabulated data), if any.
    pub fn native_grid(&self) -> Option<&[usize]> {
        match self {
            CoefficientSpec::CustomTabulated { grid, .. } => Some(grid),
            _ => None,
        }
    }

    /// Resolves relative CSV paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let CoefficientSpec::CustomTabulated { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Closed-form value at reduced cell coordinates. Not available for tabulated data.
    pub fn evaluate(&self, tau: &[f64], m: usize) -> Result<DMatrix<C64>> {
        match self {
            CoefficientSpec::Constant { value } => value.to_matrix(m),
            CoefficientSpec::Sinusoidal { mean, amplitude, wavenumbers } => {
                if wavenumbers.len() != tau.len() {
                    return Err(Error::Dimension(format!(
                        "sinusoidal coefficient has {} wavenumbers for a {}-dimensional cell",
                        wavenumbers.len(),
                        tau.len()
                    )));
                }
                let mut s = 1.0;
                for (k, t) in wavenumbers.iter().zip(tau) {
                    if *k != 0 {
                        s *= (2.0 * PI * *k as f64 * t).sin();
                    }
                }
                Ok(mean.to_matrix(m)? + amplitude.to_matrix(m)? * C64::new(s, 0.0))
            }
            CoefficientSpec::TwoPhase { values, axis } => {
                if *axis >= tau.len() {
                    return Err(Error::Dimension(format!("two-phase axis {axis} out of range")));
                }
                values[usize::from(tau[*axis] >= 0.0)].to_matrix(m)
            }
            CoefficientSpec::CustomTabulated { .. } => {
                Err(Error::InvalidInput("tabulated coefficients have no closed form; sample them first".into()))
            }
        }
    }
}

/// Cell-center sample coordinate of index `i` on an axis with `n` samples.
pub fn sample_coordinate(i: usize, n: usize) -> f64 {
    -0.5 + (i as f64 + 0.5) / n as f64
}

/// Periodic coefficient sampled at cell centers τ_i = -1/2 + (i + 1/2)/N of a uniform cell grid.
/// Node index runs fastest along axis 0.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    grid: Vec<usize>,
    m: usize,
    values: Vec<DMatrix<C64>>,
    interpolation: Interpolation,
    norm_g: f64,
    norm_ginv: f64,
    complex: bool,
    fourier: Vec<(Vec<i64>, DMatrix<C64>)>,
}

pub fn sample_coefficient(spec: &CoefficientSpec, grid: &[usize], m: usize) -> Result<CoefficientField> {
    if let CoefficientSpec::CustomTabulated { path, grid: native, interpolation } = spec {
        if native.as_slice() != grid {
            return Err(Error::GridMismatch(format!("tabulated grid {native:?} differs from requested {grid:?}")));
        }
        let values = crate::io::read_tabulated_coefficient(path, grid, m)?;
        return CoefficientField::from_samples(grid.to_vec(), values, *interpolation);
    }
    let total = grid_total(grid)?;
    let mut values = Vec::with_capacity(total);
    for idx in 0..total {
        let tau = node_coordinates(idx, grid);
        values.push(spec.evaluate(&tau, m)?);
    }
    CoefficientField::from_samples(grid.to_vec(), values, spec.interpolation())
}

fn grid_total(grid: &[usize]) -> Result<usize> {
    if grid.is_empty() || grid.iter().any(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("cell grid {grid:?} must have positive counts")));
    }
    Ok(grid.iter().product())
}

fn node_coordinates(mut idx: usize, grid: &[usize]) -> Vec<f64> {
    grid.iter()
        .map(|&n| {
            let i = idx % n;
            idx /= n;
            sample_coordinate(i, n)
        })
        .collect()
}

fn node_label(idx: usize, grid: &[usize]) -> String {
    let tau = node_coordinates(idx, grid);
    let coords: Vec<String> = tau.iter().map(|t| format!("{t:.6}")).collect();
    format!("{idx} (tau = [{}])", coords.join(", "))
}

impl CoefficientField {
    pub fn from_samples(grid: Vec<usize>, values: Vec<DMatrix<C64>>, interpolation: Interpolation) -> Result<Self> {
        let total = grid_total(&grid)?;
        if values.len() != total {
            return Err(Error::Dimension(format!("{} samples for a grid of {} nodes", values.len(), total)));
        }
        let m = values[0].nrows();
        let mut norm_g: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        for (idx, g) in values.iter().enumerate() {
            if g.nrows() != m || g.ncols() != m {
                return Err(Error::Dimension(format!("sample at node {idx} is not {m}x{m}")));
            }
            let defect = hermitian_defect(g);
            if !(defect <= HERMITIAN_TOL) {
                return Err(Error::NotHermitian { node: node_label(idx, &grid), defect });
            }
            let ev = hermitian_eigenvalues(g);
            if !(ev[0] > 0.0) || ev.iter().any(|e| !e.is_finite()) {
                return Err(Error::NotPositiveDefinite {
                    node: node_label(idx, &grid),
                    min_eigenvalue: ev[0],
                });
            }
            min_eig = min_eig.min(ev[0]);
            norm_g = norm_g.max(ev[m - 1]);
        }
        let complex = values.iter().any(|g| !is_real(g));
        let fourier = if interpolation == Interpolation::Trigonometric {
            fourier_terms(&grid, &values)
        } else {
            Vec::new()
        };
        Ok(CoefficientField {
            grid,
            m,
            values,
            interpolation,
            norm_g,
            norm_ginv: 1.0 / min_eig,
            complex,
            fourier,
        })
    }

    pub fn constant(d: usize, value: DMatrix<C64>) -> Result<Self> {
        Self::from_samples(vec![1; d], vec![value], Interpolation::PiecewiseConstant)
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.grid.len()
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn values(&self) -> &[DMatrix<C64>] {
        &self.values
    }
    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }
    /// ess sup |g| over the samples.
    pub fn norm_g(&self) -> f64 {
        self.norm_g
    }
    /// ess sup |g⁻¹| over the samples.
    pub fn norm_ginv(&self) -> f64 {
        self.norm_ginv
    }
    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn is_constant(&self) -> bool {
        let first = &self.values[0];
        self.values.iter().all(|g| g == first)
    }

    /// Cell average of g (the Voigt bound).
    pub fn mean(&self) -> DMatrix<C64> {
        let n = self.values.len() as f64;
        self.values.iter().fold(DMatrix::zeros(self.m, self.m), |acc, g| acc + g) / C64::new(n, 0.0)
    }

    /// Inverse of the cell average of g⁻¹ (the Reuss bound).
    pub fn harmonic_mean(&self) -> DMatrix<C64> {
        let n = self.values.len() as f64;
        let avg_inv = self.values.iter().fold(DMatrix::zeros(self.m, self.m), |acc, g| {
            acc + g.clone().try_inverse().expect("samples are positive definite")
        }) / C64::new(n, 0.0);
        avg_inv.try_inverse().expect("average of positive definite inverses is invertible")
    }

    /// Value at cell coordinates τ (any real numbers; reduced periodically).
    pub fn evaluate(&self, tau: &[f64]) -> DMatrix<C64> {
        let d = self.dim();
        debug_assert_eq!(tau.len(), d);
        match self.interpolation {
            Interpolation::PiecewiseConstant => {
                let mut idx = 0;
                let mut stride = 1;
                for (a, &n) in self.grid.iter().enumerate() {
                    let t = reduce_unit(tau[a]);
                    let i = (((t + 0.5) * n as f64).floor() as usize).min(n - 1);
                    idx += i * stride;
                    stride *= n;
                }
                self.values[idx].clone()
            }
            Interpolation::Linear => {
                // Multilinear interpolation between the neighbouring sample centers.
                let mut lo = vec![0usize; d];
                let mut frac = vec![0.0; d];
                for (a, &n) in self.grid.iter().enumerate() {
                    let s = (reduce_unit(tau[a]) + 0.5) * n as f64 - 0.5;
                    let f = s.floor();
                    frac[a] = s - f;
                    lo[a] = (f as i64).rem_euclid(n as i64) as usize;
                }
                let mut out = DMatrix::zeros(self.m, self.m);
                for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    let mut idx = 0;
                    let mut stride = 1;
                    for (a, &n) in self.grid.iter().enumerate() {
                        let up = corner >> a & 1 == 1;
                        w *= if up { frac[a] } else { 1.0 - frac[a] };
                        let i = if up { (lo[a] + 1) % n } else { lo[a] };
                        idx += i * stride;
                        stride *= n;
                    }
                    if w != 0.0 {
                        out += &self.values[idx] * C64::new(w, 0.0);
                    }
                }
                out
            }
            Interpolation::Trigonometric => {
                let mut out = DMatrix::zeros(self.m, self.m);
                for (ks, c) in &self.fourier {
                    let mut phase = C64::new(1.0, 0.0);
                    for (a, &k) in ks.iter().enumerate() {
                        phase *= fourier_basis(k, self.grid[a], tau[a]);
                    }
                    out += c * phase;
                }
                // Real data must produce real values regardless of rounding.
                if !self.complex {
                    out.iter_mut().for_each(|z| z.im = 0.0);
                }
                out
            }
        }
    }
}

/// Basis function of the trigonometric interpolant on the shifted sample grid.
/// The Nyquist mode k = N/2 is represented by i·sin(πNτ), which agrees with
/// e^{iπNτ} at the sample points and keeps real data real.
fn fourier_basis(k: i64, n: usize, tau: f64) -> C64 {
    if n % 2 == 0 && k == (n / 2) as i64 {
        C64::new(0.0, (PI * n as f64 * tau).sin())
    } else {
        let arg = 2.0 * PI * k as f64 * tau;
        C64::new(arg.cos(), arg.sin())
    }
}

/// Sparse tensor-product DFT of the samples.
fn fourier_terms(grid: &[usize], values: &[DMatrix<C64>]) -> Vec<(Vec<i64>, DMatrix<C64>)> {
    let d = grid.len();
    let m = values[0].nrows();
    let total = values.len();
    let mut data: Vec<DMatrix<C64>> = values.to_vec();
    let mut stride = 1;
    for &n in grid {
        let half = ((n - 1) / 2) as i64;
        let kernel: Vec<Vec<C64>> = (0..n)
            .map(|p| {
                let k = p as i64 - half;
                (0..n)
                    .map(|i| {
                        let arg = -2.0 * PI * k as f64 * sample_coordinate(i, n);
                        C64::new(arg.cos(), arg.sin()) / n as f64
                    })
                    .collect()
            })
            .collect();
        let mut next = vec![DMatrix::zeros(m, m); total];
        for (idx, slot) in next.iter_mut().enumerate() {
            let p = (idx / stride) % n;
            let base = idx - p * stride;
            for i in 0..n {
                *slot += &data[base + i * stride] * kernel[p][i];
            }
        }
        data = next;
        stride *= n;
    }
    let max = data.iter().map(crate::linalg::max_abs).fold(0.0, f64::max);
    let mut terms = Vec::new();
    for (idx, c) in data.into_iter().enumerate() {
        if crate::linalg::max_abs(&c) <= FOURIER_DROP * max {
            continue;
        }
        let mut rem = idx;
        let ks: Vec<i64> = grid
            .iter()
            .map(|&n| {
                let p = rem % n;
                rem /= n;
                p as i64 - ((n - 1) / 2) as i64
            })
            .collect();
        debug_assert_eq!(ks.len(), d);
        terms.push((ks, c));
    }
    terms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(field: &CoefficientField, tau: &[f64]) -> f64 {
        field.evaluate(tau)[(0, 0)].re
    }

    #[test]
    fn constant_field_norms() {
        let spec = CoefficientSpec::Constant { value: MatrixInput::Scalar(3.0) };
        let f = sample_coefficient(&spec, &[17], 1).unwrap();
        assert!((f.norm_g() - 3.0).abs() < 1e-15);
        assert!((f.norm_ginv() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sinusoidal_norms_and_interpolation() {
        let spec = CoefficientSpec::Sinusoidal {
            mean: MatrixInput::Scalar(2.0),
            amplitude: MatrixInput::Scalar(1.0),
            wavenumbers: vec![1],
        };
        let f = sample_coefficient(&spec, &[256], 1).unwrap();
        assert!((f.norm_g() - 3.0).abs() < 1e-3);
        assert!((f.norm_ginv() - 1.0).abs() < 1e-3);
        for &t in &[-0.4321, 0.0, 0.25, 0.3] {
            let exact = 2.0 + (2.0 * PI * t).sin();
            assert!((scalar(&f, &[t]) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn two_phase_convention() {
        let spec = CoefficientSpec::TwoPhase {
            values: [MatrixInput::Scalar(1.0), MatrixInput::Scalar(4.0)],
            axis: 0,
        };
        let f = sample_coefficient(&spec, &[64], 1).unwrap();
        assert_eq!(f.norm_g(), 4.0);
        assert_eq!(f.norm_ginv(), 1.0);
        assert_eq!(scalar(&f, &[0.4]), 4.0);
        assert_eq!(scalar(&f, &[-0.1]), 1.0);
        assert_eq!(scalar(&f, &[0.6]), 1.0);
    }

    #[test]
    fn nyquist_mode_round_trips_on_samples() {
        let n = 8;
        let values: Vec<DMatrix<C64>> = (0..n)
            .map(|i| DMatrix::from_element(1, 1, C64::new(2.0 + if i % 2 == 0 { 0.5 } else { -0.5 } + 0.1 * i as f64, 0.0)))
            .collect();
        let f = CoefficientField::from_samples(vec![n], values.clone(), Interpolation::Trigonometric).unwrap();
        for (i, v) in values.iter().enumerate() {
            let z = f.evaluate(&[sample_coordinate(i, n)]);
            assert!((z[(0, 0)] - v[(0, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_interpolation_hits_samples_and_midpoints() {
        let values: Vec<DMatrix<C64>> = [1.0, 2.0, 4.0, 3.0]
            .iter()
            .map(|v| DMatrix::from_element(1, 1, C64::new(*v, 0.0)))
            .collect();
        let f = CoefficientField::from_samples(vec![4], values, Interpolation::Linear).unwrap();
        assert!((scalar(&f, &[sample_coordinate(2, 4)]) - 4.0).abs() < 1e-14);
        // Between the last and the first sample across the periodic seam.
        assert!((scalar(&f, &[0.5]) - 2.0).abs() < 1e-14);
        assert!((scalar(&f, &[-0.5]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn non_pd_sample_names_node() {
        let values = vec![
            DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
            DMatrix::from_element(1, 1, C64::new(-1.0, 0.0)),
        ];
        let err = CoefficientField::from_samples(vec![2], values, Interpolation::Linear).unwrap_err();
        assert!(err.to_string().contains("node 1"));
    }

    #[test]
    fn non_hermitian_sample_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)]);
        let err = CoefficientField::from_samples(vec![1], vec![g], Interpolation::Linear).unwrap_err();
        assert!(matches!(err, Error::NotHermitian { .. }));
    }

    #[test]
    fn two_dimensional_trigonometric_product() {
        let spec = CoefficientSpec::Sinusoidal {
            mean: MatrixInput::Scalar(2.0),
            amplitude: MatrixInput::Scalar(1.0),
            wavenumbers: vec![1, 1],
        };
        let f = sample_coefficient(&spec, &[16, 12], 1).unwrap();
        let t = [0.123, -0.377];
        let exact = 2.0 + (2.0 * PI * t[0]).sin() * (2.0 * PI * t[1]).sin();
        assert!((scalar(&f, &t) - exact).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"kind": "two-phase", "values": [1.0, 4.0]}"#;
        let spec: CoefficientSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.interpolation(), Interpolation::PiecewiseConstant);
        let bad = r#"{"kind": "two-phase", "values": [1.0, 4.0], "axsi": 0}"#;
        assert!(serde_json::from_str::<CoefficientSpec>(bad).is_err());
    }
}
