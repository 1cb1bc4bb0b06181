//! Modal calculus of the discrete operator: cos(tA^{1/2}), A^{-1/2}sin(tA^{1/2})
//! and Duhamel integrals, evaluated mode by mode.
//!
//! With lumped mass M = D the generalized problem Kv = λMv is reduced to the
//! symmetric matrix D^{-1/2}KD^{-1/2}. For piecewise-linear loads the Duhamel
//! integral over each sample interval is propagated in closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::domain::assembly::{DiscreteOperator, SobolevGrams};
use crate::error::{Error, Result};
use crate::evolution::forcing::{Forcing, TimeProfile};
use crate::evolution::trajectory::{check_times, ProblemTag, Trajectory};
use crate::linalg::{csr_bandwidth, csr_matvec, csr_to_dense, dense_symmetric_eigen, tridiagonal_eigen};

/// Largest constrained system decomposed in 1D.
pub const SIZE_CAP_1D: usize = 4096;
/// Largest constrained system decomposed in 2D.
pub const SIZE_CAP_2D: usize = 8192;

/// Mass-orthonormal eigenpairs of (stiffness, mass) on interior dofs.
#[derive(Clone, Debug)]
pub struct ModalBasis {
    pub eigenvalues: Vec<f64>,
    /// Columns are modes, VᵀMV = I.
    pub vectors: DMatrix<f64>,
    pub mass: Vec<f64>,
    stiffness: CsrMatrix<f64>,
    grams: Option<Arc<SobolevGrams>>,
}

pub fn size_cap(dim: usize) -> usize {
    if dim <= 1 {
        SIZE_CAP_1D
    } else {
        SIZE_CAP_2D
    }
}

/// Full eigendecomposition of a discrete operator.
pub fn spectral_decompose(op: &DiscreteOperator) -> Result<ModalBasis> {
    let cap = size_cap(op.grid().dim());
    if op.n() > cap {
        return Err(Error::SizeCap { size: op.n(), cap });
    }
    let mut basis = ModalBasis::from_matrices(&op.stiffness, op.mass())?;
    basis.grams = Some(op.grams.clone());
    Ok(basis)
}

impl ModalBasis {
    /// Decomposes a symmetric stiffness against a positive diagonal mass.
    pub fn from_matrices(stiffness: &CsrMatrix<f64>, mass: &[f64]) -> Result<Self> {
        let n = mass.len();
        if stiffness.nrows() != n || stiffness.ncols() != n {
            return Err(Error::Dimension(format!("stiffness {}x{} vs mass {n}", stiffness.nrows(), stiffness.ncols())));
        }
        if mass.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidInput("mass must be positive".into()));
        }
        let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let (values, w) = if csr_bandwidth(stiffness) <= 1 {
            let mut diag = vec![0.0; n];
            let mut off = vec![0.0; n.saturating_sub(1)];
            for (i, j, v) in stiffness.triplet_iter() {
                if i == j {
                    diag[i] = v * s[i] * s[i];
                } else if j == i + 1 {
                    off[i] = v * s[i] * s[j];
                }
            }
            tridiagonal_eigen(&diag, &off)?
        } else {
            let mut a = csr_to_dense(stiffness);
            for j in 0..n {
                for i in 0..n {
                    a[(i, j)] *= s[i] * s[j];
                }
            }
            dense_symmetric_eigen(a)?
        };
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Eigen(format!("stiffness is not positive definite (eigenvalue {bad:e})")));
        }
        let mut vectors = w;
        for j in 0..n {
            for i in 0..n {
                vectors[(i, j)] *= s[i];
            }
        }
        Ok(ModalBasis {
            eigenvalues: values,
            vectors,
            mass: mass.to_vec(),
            stiffness: stiffness.clone(),
            grams: None,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn grams(&self) -> Option<&Arc<SobolevGrams>> {
        self.grams.as_ref()
    }

    /// Modal coefficients Vᵀ M x of an interior field.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mx = DVector::from_fn(x.len(), |i, _| self.mass[i] * x[i]);
        self.vectors.tr_mul(&mx)
    }

    /// Modal coefficients Vᵀ r of a load functional.
    pub fn project_load(&self, r: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(r)
    }

    /// Interior field V c.
    pub fn reconstruct(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.vectors * c
    }

    /// x ↦ V diag(f(λ)) Vᵀ M x.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64, x: &DVector<f64>) -> DVector<f64> {
        let mut c = self.project(x);
        for (ck, lam) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= f(*lam);
        }
        self.reconstruct(&c)
    }

    /// max_k ‖Kv_k − λ_k M v_k‖ / (λ_k ‖M v_k‖).
    pub fn max_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            let v = self.vectors.column(k).into_owned();
            let kv = csr_matvec(&self.stiffness, &v);
            let mv = DVector::from_fn(v.len(), |i, _| self.mass[i] * v[i]);
            let r = (kv - &mv * self.eigenvalues[k]).norm();
            worst = worst.max(r / (self.eigenvalues[k] * mv.norm()));
        }
        worst
    }

    /// max |VᵀMV − I|.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut mv = self.vectors.clone();
        for j in 0..mv.ncols() {
            for i in 0..mv.nrows() {
                mv[(i, j)] *= self.mass[i];
            }
        }
        let g = self.vectors.tr_mul(&mv);
        (g - DMatrix::identity(self.len(), self.len())).amax()
    }
}

/// Exact step of u'' + λu = a + b(s - s₀) over Δ.
#[inline]
fn propagate(u: f64, v: f64, lam: f64, dt: f64, a: f64, b: f64) -> (f64, f64) {
    let w = lam.sqrt();
    let (sn, cs) = (w * dt).sin_cos();
    let p = u - a / lam;
    let q = v - b / lam;
    (cs * p + sn / w * q + (a + b * dt) / lam, -w * sn * p + cs * q + b / lam)
}

/// Modal load sampled uniformly in time, linear in between.
#[derive(Clone, Debug)]
pub enum ModalLoad {
    None,
    Separable { coeffs: DVector<f64>, profile: TimeProfile },
    Sampled { t0: f64, dt: f64, loads: Vec<DVector<f64>> },
}

impl ModalLoad {
    fn grid(&self) -> Option<(f64, f64, usize)> {
        match self {
            ModalLoad::None => None,
            ModalLoad::Separable { profile, .. } => Some((profile.t0, profile.dt, profile.values.len())),
            ModalLoad::Sampled { t0, dt, loads } => Some((*t0, *dt, loads.len())),
        }
    }

    fn at(&self, i: usize, k: usize) -> f64 {
        match self {
            ModalLoad::None => 0.0,
            ModalLoad::Separable { coeffs, profile } => profile.values[i] * coeffs[k],
            ModalLoad::Sampled { loads, .. } => loads[i][k],
        }
    }
}

/// Initial data and load in modal coordinates; evaluable at any set of times.
#[derive(Clone, Debug)]
pub struct ModalSolution<'a> {
    pub basis: &'a ModalBasis,
    pub tag: ProblemTag,
    u0: DVector<f64>,
    v0: DVector<f64>,
    /// Initial data as given, returned verbatim at t = 0.
    phi: DVector<f64>,
    psi: DVector<f64>,
    load: ModalLoad,
}

impl<'a> ModalSolution<'a> {
    /// `phi`, `psi` are interior fields.
    pub fn new(basis: &'a ModalBasis, tag: ProblemTag, phi: &DVector<f64>, psi: &DVector<f64>, load: ModalLoad) -> Result<Self> {
        if phi.len() != basis.len() || psi.len() != basis.len() {
            return Err(Error::Dimension(format!("initial data of length {}/{} for {} modes", phi.len(), psi.len(), basis.len())));
        }
        if let Some((t0, dt, len)) = load.grid() {
            if t0 != 0.0 || !(dt > 0.0) || len < 2 {
                return Err(Error::InvalidInput("load samples must start at t = 0 with at least two samples".into()));
            }
        }
        Ok(ModalSolution {
            basis,
            tag,
            u0: basis.project(phi),
            v0: basis.project(psi),
            phi: phi.clone(),
            psi: psi.clone(),
            load,
        })
    }

    pub fn from_forcing(basis: &'a ModalBasis, tag: ProblemTag, phi: &DVector<f64>, psi: &DVector<f64>, forcing: &Forcing) -> Result<Self> {
        let load = match forcing {
            Forcing::None => ModalLoad::None,
            Forcing::Separable { profile, .. } => {
                let grams = basis.grams().ok_or_else(|| Error::InvalidInput("basis carries no Gram matrices".into()))?;
                let r = forcing.spatial_load(grams).expect("separable forcing has a load");
                ModalLoad::Separable {
                    coeffs: basis.project_load(&r),
                    profile: profile.clone(),
                }
            }
        };
        Self::new(basis, tag, phi, psi, load)
    }

    /// Modal displacement and velocity coefficients at nondecreasing times.
    pub fn modal_states(&self, times: &[f64]) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        check_times(times)?;
        let n = self.basis.len();
        let lam = &self.basis.eigenvalues;
        let Some((t0, dt, len)) = self.load.grid() else {
            return Ok(times
                .iter()
                .map(|&t| {
                    let mut u = DVector::zeros(n);
                    let mut v = DVector::zeros(n);
                    for k in 0..n {
                        let (a, b) = propagate(self.u0[k], self.v0[k], lam[k], t, 0.0, 0.0);
                        u[k] = a;
                        v[k] = b;
                    }
                    (u, v)
                })
                .collect());
        };
        let end = t0 + dt * (len - 1) as f64;
        if let Some(&t) = times.iter().find(|&&t| t > end + 1e-12 * end.max(1.0)) {
            return Err(Error::TimeOutOfRange { time: t, start: t0, end });
        }
        let (sn, cs): (Vec<f64>, Vec<f64>) = lam.iter().map(|l| (l.sqrt() * dt).sin_cos()).unzip();
        let mut u = self.u0.clone();
        let mut v = self.v0.clone();
        let mut interval = 0usize;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            // Advance whole intervals that end at or before t.
            while interval + 1 < len && t0 + (interval + 1) as f64 * dt <= t + 1e-14 * t.max(1.0) {
                for k in 0..n {
                    let a = self.load.at(interval, k);
                    let b = (self.load.at(interval + 1, k) - a) / dt;
                    let w = lam[k].sqrt();
                    let p = u[k] - a / lam[k];
                    let q = v[k] - b / lam[k];
                    u[k] = cs[k] * p + sn[k] / w * q + (a + b * dt) / lam[k];
                    v[k] = -w * sn[k] * p + cs[k] * q + b / lam[k];
                }
                interval += 1;
            }
            let rem = t - (t0 + interval as f64 * dt);
            if rem.abs() <= 1e-14 * t.max(1.0) || interval + 1 >= len {
                out.push((u.clone(), v.clone()));
                continue;
            }
            let mut ut = DVector::zeros(n);
            let mut vt = DVector::zeros(n);
            for k in 0..n {
                let a = self.load.at(interval, k);
                let b = (self.load.at(interval + 1, k) - a) / dt;
                let (x, y) = propagate(u[k], v[k], lam[k], rem, a, b);
                ut[k] = x;
                vt[k] = y;
            }
            out.push((ut, vt));
        }
        Ok(out)
    }

    /// Interior displacement fields at nondecreasing times.
    pub fn interior_states(&self, times: &[f64]) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .modal_states(times)?
            .into_iter()
            .zip(times)
            .map(|((u, _), t)| if *t == 0.0 { self.phi.clone() } else { self.basis.reconstruct(&u) })
            .collect())
    }

    /// All-node trajectory (zero on the boundary).
    pub fn trajectory(&self, times: &[f64]) -> Result<Trajectory> {
        let grams = self.basis.grams().ok_or_else(|| Error::InvalidInput("basis carries no Gram matrices".into()))?;
        let states = self.modal_states(times)?;
        let (us, vs) = states
            .into_iter()
            .zip(times)
            .map(|((u, v), t)| {
                if *t == 0.0 {
                    (grams.embed(&self.phi), grams.embed(&self.psi))
                } else {
                    (grams.embed(&self.basis.reconstruct(&u)), grams.embed(&self.basis.reconstruct(&v)))
                }
            })
            .unzip();
        Ok(Trajectory {
            tag: self.tag,
            times: times.to_vec(),
            states: us,
            velocities: vs,
        })
    }

    /// Modal energy Σ v_k² + λ_k u_k² per time.
    pub fn energy(&self, times: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .modal_states(times)?
            .iter()
            .map(|(u, v)| u.iter().zip(v.iter()).zip(&self.basis.eigenvalues).map(|((a, b), l)| b * b + l * a * a).sum())
            .collect())
    }
}

/// Modal trajectory of (∂_t² + A)u = F, u(0) = φ, u'(0) = ψ (all-node φ, ψ).
pub fn evolve(basis: &ModalBasis, tag: ProblemTag, phi: &DVector<f64>, psi: &DVector<f64>, forcing: &Forcing, times: &[f64]) -> Result<Trajectory> {
    let grams = basis.grams().ok_or_else(|| Error::InvalidInput("basis carries no Gram matrices".into()))?;
    let sol = ModalSolution::from_forcing(basis, tag, &grams.restrict(phi), &grams.restrict(psi), forcing)?;
    sol.trajectory(times)
}
