//! Periodic cell problem, effective matrix and the constants ledger.
//!
//! The cell is discretized in τ-coordinates (x = Aτ) with periodic P1/Q1 elements
//! on a uniform grid of N_j nodes per axis; node i sits at τ = -1/2 + i/N and element
//! centers coincide with the coefficient sample points when the grids agree.
//!
//! The stored corrector is Λ̃ = -iΛ, which solves
//! ∫⟨g(b(∇)Λ̃ + 1), b(∇)η⟩ = 0 and is real for real data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::assembly::ElementTable;
use crate::error::{Error, Result};
use crate::linalg::{complexify, csr_from_triplets, csr_matvec, spectral_norm, symmetric_eigenvalues, SpdSolver, C64};
use crate::periodic::Medium;

/// Relative residual accepted for the discrete cell equations.
pub const CELL_RESIDUAL_TOL: f64 = 1e-10;
/// Relative slack of the Voigt–Reuss and norm bounds.
pub const BRACKET_TOL: f64 = 1e-9;

/// Uniform periodic grid on the unit τ-cell.
#[derive(Clone, Debug)]
struct CellGrid {
    n: Vec<usize>,
}

impl CellGrid {
    fn node_count(&self) -> usize {
        self.n.iter().product()
    }

    fn multi(&self, mut idx: usize) -> Vec<usize> {
        self.n
            .iter()
            .map(|&k| {
                let i = idx % k;
                idx /= k;
                i
            })
            .collect()
    }

    fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.n.len()).rev() {
            idx = idx * self.n[a] + multi[a] % self.n[a];
        }
        idx
    }

    fn h(&self) -> Vec<f64> {
        self.n.iter().map(|&k| 1.0 / k as f64).collect()
    }

    /// Corner nodes of element e (lower-left corner index e), bit a = +1 along axis a.
    fn element_nodes(&self, e: usize) -> Vec<usize> {
        let base = self.multi(e);
        let d = self.n.len();
        (0..(1usize << d))
            .map(|corner| {
                let m: Vec<usize> = (0..d).map(|a| base[a] + (corner >> a & 1)).collect();
                self.index(&m)
            })
            .collect()
    }

    fn element_center(&self, e: usize) -> Vec<f64> {
        self.multi(e).iter().zip(&self.n).map(|(&i, &k)| -0.5 + (i as f64 + 0.5) / k as f64).collect()
    }

    fn node_tau(&self, idx: usize) -> Vec<f64> {
        self.multi(idx).iter().zip(&self.n).map(|(&i, &k)| -0.5 + i as f64 / k as f64).collect()
    }
}

/// Discrete corrector on the cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorField {
    pub grid: Vec<usize>,
    /// Real form of Λ̃ per node: nr × mr.
    pub values: Vec<DMatrix<f64>>,
    pub complex: bool,
    /// Largest entry of the cell average relative to max |Λ̃|.
    pub mean_residual: f64,
    /// Relative residual of the unpinned discrete cell equations.
    pub equation_residual: f64,
    /// ‖Λ‖_{L₂(Ω)} (physical cell measure).
    pub l2_norm: f64,
    /// ‖∇Λ‖_{L₂(Ω)}.
    pub h1_seminorm: f64,
    /// Symbol matrices in τ-coordinates, b̂_j = Σ_k (A⁻¹)_{jk} b_k (real form).
    b_tau: Vec<DMatrix<f64>>,
    cell_volume: f64,
}

impl CorrectorField {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Cell coordinates of node `idx`.
    pub fn node_tau(&self, idx: usize) -> Vec<f64> {
        CellGrid { n: self.grid.clone() }.node_tau(idx)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    /// Periodic multilinear interpolation of Λ̃ at cell coordinates τ (any real τ).
    pub fn interpolate(&self, tau: &[f64]) -> DMatrix<f64> {
        let g = CellGrid { n: self.grid.clone() };
        let d = self.grid.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let n = self.grid[a] as f64;
            let s = ((tau[a] + 0.5) * n).rem_euclid(n);
            let i = s.floor();
            base[a] = (i as usize) % self.grid[a];
            frac[a] = s - i;
        }
        let mut out = DMatrix::zeros(self.values[0].nrows(), self.values[0].ncols());
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut m = base.clone();
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    m[a] += 1;
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                out += &self.values[g.index(&m)] * w;
            }
        }
        out
    }

    /// Complex Λ̃ at node `idx`.
    pub fn complex_value(&self, idx: usize) -> DMatrix<C64> {
        if self.complex {
            complexify(&self.values[idx])
        } else {
            self.values[idx].map(|v| C64::new(v, 0.0))
        }
    }

    /// Flux g(b(∇)Λ̃ + 1) per element (real form), computed with the cell coefficient `g_e`.
    pub fn element_fluxes(&self, medium: &Medium) -> Vec<DMatrix<f64>> {
        let cg = CellGrid { n: self.grid.clone() };
        let table = ElementTable::new(&cg.h());
        let ne = cg.node_count();
        (0..ne)
            .map(|e| {
                let g = medium.g_real_cell(&cg.element_center(e));
                let bl = self.element_gradient_term(&cg, &table, e);
                g * (bl + DMatrix::identity(medium.mr(), medium.mr()))
            })
            .collect()
    }

    /// Element average of b(∇)Λ̃ (mr × mr).
    fn element_gradient_term(&self, cg: &CellGrid, table: &ElementTable, e: usize) -> DMatrix<f64> {
        let nodes = cg.element_nodes(e);
        let vol: f64 = cg.h().iter().product();
        let (nr, mr) = (self.values[0].nrows(), self.values[0].ncols());
        let mut acc = DMatrix::zeros(self.b_tau[0].nrows(), mr);
        for (j, bj) in self.b_tau.iter().enumerate() {
            let mut grad = DMatrix::zeros(nr, mr);
            for (a, &node) in nodes.iter().enumerate() {
                grad += &self.values[node] * table.first[j][a];
            }
            acc += bj * grad / vol;
        }
        acc
    }
}

/// Effective matrix with its Voigt and Reuss brackets (complex form).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveMatrix {
    pub g0: DMatrix<C64>,
    pub voigt: DMatrix<C64>,
    pub reuss: DMatrix<C64>,
    /// Real forms, as used by the discrete operators.
    pub g0_real: DMatrix<f64>,
    pub voigt_real: DMatrix<f64>,
    pub reuss_real: DMatrix<f64>,
}

impl EffectiveMatrix {
    /// Smallest eigenvalues of g0 - reuss and voigt - g0.
    pub fn bracket_gaps(&self) -> (f64, f64) {
        let lower = symmetric_eigenvalues(&(&self.g0_real - &self.reuss_real));
        let upper = symmetric_eigenvalues(&(&self.voigt_real - &self.g0_real));
        (lower[0], upper[0])
    }
}

fn tau_symbol(medium: &Medium) -> Vec<DMatrix<f64>> {
    let inv = medium.lattice.inverse();
    let d = medium.dim();
    (0..d)
        .map(|j| {
            let mut acc = DMatrix::zeros(medium.mr(), medium.nr());
            for k in 0..d {
                acc += &medium.b_real()[k] * inv[(j, k)];
            }
            acc
        })
        .collect()
}

/// Solves the cell problem on a periodic grid with `resolution` nodes per axis.
pub fn solve_corrector(medium: &Medium, resolution: &[usize]) -> Result<CorrectorField> {
    let d = medium.dim();
    if resolution.len() != d {
        return Err(Error::Dimension(format!("cell resolution has {} axes, medium has {d}", resolution.len())));
    }
    if resolution.iter().any(|&k| k < 2) {
        return Err(Error::InvalidInput("cell resolution needs at least 2 nodes per axis".into()));
    }
    let cg = CellGrid { n: resolution.to_vec() };
    let h = cg.h();
    let table = ElementTable::new(&h);
    let nv = 1usize << d;
    let (nr, mr) = (medium.nr(), medium.mr());
    let b_tau = tau_symbol(medium);
    let nn = cg.node_count();
    let ndof = nn * nr;

    let mut trip = Vec::with_capacity(nn * nv * nv * nr * nr);
    let mut rhs = DMatrix::<f64>::zeros(ndof, mr);
    for e in 0..nn {
        let g = medium.g_real_cell(&cg.element_center(e));
        let nodes = cg.element_nodes(e);
        let c: Vec<Vec<DMatrix<f64>>> = (0..d).map(|k| (0..d).map(|j| b_tau[k].transpose() * &g * &b_tau[j]).collect()).collect();
        let bg: Vec<DMatrix<f64>> = (0..d).map(|k| b_tau[k].transpose() * &g).collect();
        for a in 0..nv {
            for b in 0..nv {
                for ci in 0..nr {
                    for cj in 0..nr {
                        let mut v = 0.0;
                        for k in 0..d {
                            for j in 0..d {
                                v += c[k][j][(ci, cj)] * table.grad[k][j][a][b];
                            }
                        }
                        if v != 0.0 {
                            trip.push((nodes[a] * nr + ci, nodes[b] * nr + cj, v));
                        }
                    }
                }
            }
            for k in 0..d {
                let w = table.first[k][a];
                if w == 0.0 {
                    continue;
                }
                for ci in 0..nr {
                    for col in 0..mr {
                        rhs[(nodes[a] * nr + ci, col)] -= w * bg[k][(ci, col)];
                    }
                }
            }
        }
    }
    let full = csr_from_triplets(ndof, ndof, &trip);

    // Pin node 0: its rows and columns become the identity, its right-hand side zero.
    let pinned: Vec<(usize, usize, f64)> = trip
        .iter()
        .filter(|(i, j, _)| *i >= nr && *j >= nr)
        .copied()
        .chain((0..nr).map(|c| (c, c, 1.0)))
        .collect();
    let reduced = csr_from_triplets(ndof, ndof, &pinned);
    let mut pinned_rhs = rhs.clone();
    for c in 0..nr {
        pinned_rhs.row_mut(c).fill(0.0);
    }
    let solver = SpdSolver::new(&reduced).map_err(|e| Error::Solver(format!("cell system: {e}")))?;
    let mut sol = solver.solve_columns(&pinned_rhs)?;

    // Remove the nodal mean (uniform weights on a periodic grid).
    for col in 0..mr {
        for ci in 0..nr {
            let mean: f64 = (0..nn).map(|i| sol[(i * nr + ci, col)]).sum::<f64>() / nn as f64;
            for i in 0..nn {
                sol[(i * nr + ci, col)] -= mean;
            }
        }
    }

    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for col in 0..mr {
        let x = DVector::from_fn(ndof, |i, _| sol[(i, col)]);
        let kx = csr_matvec(&full, &x);
        let r = DVector::from_fn(ndof, |i, _| kx[i] - rhs[(i, col)]);
        residual = residual.max(r.amax());
        scale = scale.max(rhs.column(col).amax());
    }
    let equation_residual = if scale > 0.0 { residual / scale } else { residual };
    if equation_residual > CELL_RESIDUAL_TOL {
        return Err(Error::SolverDiverged {
            iterations: 0,
            residual: equation_residual,
        });
    }

    let values: Vec<DMatrix<f64>> = (0..nn).map(|i| DMatrix::from_fn(nr, mr, |r, c| sol[(i * nr + r, c)])).collect();
    let max_abs = values.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let mean = values.iter().fold(DMatrix::zeros(nr, mr), |acc, v| acc + v) / nn as f64;
    let mean_residual = if max_abs > 0.0 { mean.amax() / max_abs } else { 0.0 };

    // ‖Λ‖² = |Ω| Σ_e ∫ |Λ̃|²_F dτ with the exact Q1 element mass, halved for realified data.
    let cell_volume = medium.lattice.cell_volume();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let inv = medium.lattice.inverse();
    let metric = DMatrix::from_fn(d, d, |j, l| (0..d).map(|k| inv[(j, k)] * inv[(l, k)]).sum::<f64>());
    let emass = element_mass(&h);
    for e in 0..nn {
        let nodes = cg.element_nodes(e);
        for a in 0..nv {
            for b in 0..nv {
                let dot = values[nodes[a]].dot(&values[nodes[b]]);
                l2 += emass[a][b] * dot;
                let mut gsum = 0.0;
                for j in 0..d {
                    for l in 0..d {
                        gsum += metric[(j, l)] * table.grad[j][l][a][b];
                    }
                }
                h1 += gsum * dot;
            }
        }
    }
    let factor = if medium.is_complex() { 0.5 } else { 1.0 };
    let l2_norm = (factor * cell_volume * l2).max(0.0).sqrt();
    let h1_seminorm = (factor * cell_volume * h1).max(0.0).sqrt();

    Ok(CorrectorField {
        grid: resolution.to_vec(),
        values,
        complex: medium.is_complex(),
        mean_residual,
        equation_residual,
        l2_norm,
        h1_seminorm,
        b_tau,
        cell_volume,
    })
}

/// Exact Q1 element mass ∫ φ_a φ_b on a cell of widths h.
fn element_mass(h: &[f64]) -> Vec<Vec<f64>> {
    let d = h.len();
    let nv = 1usize << d;
    let vol: f64 = h.iter().product();
    (0..nv)
        .map(|a| {
            (0..nv)
                .map(|b| {
                    let mut v = vol;
                    for ax in 0..d {
                        v *= if (a >> ax & 1) == (b >> ax & 1) { 1.0 / 3.0 } else { 1.0 / 6.0 };
                    }
                    v
                })
                .collect()
        })
        .collect()
}

fn to_complex_form(medium: &Medium, a: &DMatrix<f64>) -> DMatrix<C64> {
    if medium.is_complex() {
        complexify(a)
    } else {
        a.map(|v| C64::new(v, 0.0))
    }
}

/// g⁰ as the cell average of g(b(∇)Λ̃ + 1), with Voigt and Reuss averages over the same elements.
pub fn effective_matrix(medium: &Medium, corrector: &CorrectorField) -> Result<EffectiveMatrix> {
    let cg = CellGrid { n: corrector.grid.clone() };
    let table = ElementTable::new(&cg.h());
    let vol: f64 = cg.h().iter().product();
    let mr = medium.mr();
    let mut g0 = DMatrix::zeros(mr, mr);
    let mut voigt = DMatrix::zeros(mr, mr);
    let mut inv_avg = DMatrix::zeros(mr, mr);
    for e in 0..cg.node_count() {
        let g = medium.g_real_cell(&cg.element_center(e));
        let bl = corrector.element_gradient_term(&cg, &table, e);
        g0 += &g * (bl + DMatrix::identity(mr, mr)) * vol;
        voigt += &g * vol;
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::Solver("cell coefficient is singular".into()))?;
        inv_avg += ginv * vol;
    }
    let reuss = inv_avg.try_inverse().ok_or_else(|| Error::Solver("harmonic mean is singular".into()))?;
    // Symmetrize away round-off; the defect is checked first.
    let defect = (&g0 - g0.transpose()).amax() / g0.amax().max(f64::MIN_POSITIVE);
    if defect > 1e-10 {
        return Err(Error::Bracketing(format!("effective matrix is not symmetric (relative defect {defect:e})")));
    }
    let g0 = (&g0 + g0.transpose()) * 0.5;
    let eff = EffectiveMatrix {
        g0: to_complex_form(medium, &g0),
        voigt: to_complex_form(medium, &voigt),
        reuss: to_complex_form(medium, &reuss),
        g0_real: g0,
        voigt_real: voigt,
        reuss_real: reuss,
    };
    let scale = spectral_norm(&eff.g0);
    let (lower, upper) = eff.bracket_gaps();
    if lower < -BRACKET_TOL * scale || upper < -BRACKET_TOL * scale {
        return Err(Error::Bracketing(format!(
            "reuss <= g0 <= voigt fails: min eig(g0 - reuss) = {lower:e}, min eig(voigt - g0) = {upper:e}"
        )));
    }
    Ok(eff)
}

/// Measured and derived constants of one experiment. Optional slots are filled
/// by later stages.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub alpha0: f64,
    pub alpha1: f64,
    pub norm_g: f64,
    pub norm_ginv: f64,
    /// Coercivity constant with the standard convention: c_*² = ‖g⁻¹‖(1 + diam²)/α₀.
    pub c_star: f64,
    /// The same constant as printed in the source derivation, kept for comparison.
    pub c_star_printed: f64,
    pub domain_diameter: f64,
    pub corrector_norm: f64,
    pub corrector_h1_seminorm: f64,
    /// ‖Λ‖_{L₂(Ω)}/|Ω|^{1/2}: an empirical lower bound for M.
    pub m_surrogate: f64,
    pub c_hat: Option<f64>,
    pub c_o: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

impl ConstantsLedger {
    pub fn new(medium: &Medium, corrector: &CorrectorField, domain_diameter: f64) -> Self {
        let alpha0 = medium.symbol.alpha0();
        let norm_ginv = medium.field.norm_ginv();
        let diam2 = domain_diameter * domain_diameter;
        let c_star = (norm_ginv * (1.0 + diam2) / alpha0).sqrt();
        let printed_inv = (0.5 * (1.0 + 1.0 / diam2) * alpha0 * norm_ginv).sqrt();
        ConstantsLedger {
            alpha0,
            alpha1: medium.symbol.alpha1(),
            norm_g: medium.field.norm_g(),
            norm_ginv,
            c_star,
            c_star_printed: 1.0 / printed_inv,
            domain_diameter,
            corrector_norm: corrector.l2_norm,
            corrector_h1_seminorm: corrector.h1_seminorm,
            m_surrogate: corrector.l2_norm / corrector.cell_volume.sqrt(),
            ..Default::default()
        }
    }

    /// All recorded entries are finite; those that must be positive are.
    pub fn is_valid(&self) -> bool {
        let required = [self.alpha0, self.alpha1, self.norm_g, self.norm_ginv, self.c_star, self.domain_diameter];
        let nonneg = [self.corrector_norm, self.corrector_h1_seminorm, self.m_surrogate];
        let optional = [self.c_hat, self.c_o, self.c1, self.c2, self.c3, self.c4];
        required.iter().all(|v| v.is_finite() && *v > 0.0)
            && nonneg.iter().all(|v| v.is_finite() && *v >= 0.0)
            && optional.iter().flatten().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellCertificate {
    pub checks: Vec<CellCheck>,
    pub passed: bool,
}

/// Report-only checks of the structural bounds on g⁰ and Λ.
pub fn certify_cell(medium: &Medium, corrector: &CorrectorField, eff: &EffectiveMatrix) -> CellCertificate {
    let mut checks = Vec::new();
    let norm_g0 = spectral_norm(&eff.g0);
    let g0_inv = eff.g0_real.clone().try_inverse();
    let norm_g0_inv = g0_inv.map(|m| symmetric_eigenvalues(&(&m + m.transpose()).scale(0.5)).last().copied().unwrap_or(f64::INFINITY));
    let norm_g0_inv = norm_g0_inv.unwrap_or(f64::INFINITY);
    let slack = 1.0 + BRACKET_TOL;
    let mut push = |name: &str, value: f64, bound: f64, passed: bool| {
        checks.push(CellCheck {
            name: name.into(),
            value,
            bound,
            passed,
        })
    };
    push("|g0| <= |g|", norm_g0, medium.field.norm_g(), norm_g0 <= medium.field.norm_g() * slack);
    push(
        "|g0^-1| <= |g^-1|",
        norm_g0_inv,
        medium.field.norm_ginv(),
        norm_g0_inv <= medium.field.norm_ginv() * slack,
    );
    let (lower, upper) = eff.bracket_gaps();
    let tol = -BRACKET_TOL * norm_g0;
    push("min eig(g0 - reuss)", lower, tol, lower >= tol);
    push("min eig(voigt - g0)", upper, tol, upper >= tol);
    push("cell mean of corrector", corrector.mean_residual, 1e-10, corrector.mean_residual <= 1e-10);
    push(
        "cell equation residual",
        corrector.equation_residual,
        CELL_RESIDUAL_TOL,
        corrector.equation_residual <= CELL_RESIDUAL_TOL,
    );
    let passed = checks.iter().all(|c| c.passed);
    CellCertificate { checks, passed }
}

/// Flux g(Λ̃' + 1) at element centers for scalar 1D problems.
pub fn flux_1d(medium: &Medium, corrector: &CorrectorField) -> Result<Vec<f64>> {
    if medium.dim() != 1 || medium.mr() != 1 || medium.nr() != 1 {
        return Err(Error::Dimension("flux constancy applies to real scalar 1D problems".into()));
    }
    Ok(corrector.element_fluxes(medium).iter().map(|f| f[(0, 0)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::{build_lattice, sample_coefficient, CoefficientField, CoefficientSpec, Interpolation, Lattice, MatrixInput, SymbolFamily};

    fn scalar_medium(d: usize, spec: &CoefficientSpec, grid: &[usize]) -> Medium {
        let field = sample_coefficient(spec, grid, d).unwrap();
        Medium::new(Lattice::unit(d), field, SymbolFamily::gradient(d)).unwrap()
    }

    fn two_phase(axis: usize) -> CoefficientSpec {
        CoefficientSpec::TwoPhase {
            values: [MatrixInput::Scalar(1.0), MatrixInput::Scalar(4.0)],
            axis,
        }
    }

    #[test]
    fn constant_coefficient_has_zero_corrector() {
        let field = CoefficientField::constant(2, DMatrix::from_diagonal_element(2, 2, C64::new(3.0, 0.0))).unwrap();
        let medium = Medium::new(Lattice::unit(2), field, SymbolFamily::gradient(2)).unwrap();
        let lam = solve_corrector(&medium, &[8, 8]).unwrap();
        assert!(lam.max_abs() < 1e-13);
        let eff = effective_matrix(&medium, &lam).unwrap();
        assert!((eff.g0_real.clone() - DMatrix::identity(2, 2) * 3.0).amax() < 1e-13);
        assert!(certify_cell(&medium, &lam, &eff).passed);
    }

    #[test]
    fn two_phase_piecewise_linear_corrector() {
        let medium = scalar_medium(1, &two_phase(0), &[512]);
        let lam = solve_corrector(&medium, &[512]).unwrap();
        let eff = effective_matrix(&medium, &lam).unwrap();
        assert!((eff.g0_real[(0, 0)] - 1.6).abs() < 1e-12);
        // Slopes g0/g - 1: 0.6 where g = 1 (τ < 0), -0.6 where g = 4; extremes ±0.15 at the interfaces.
        let ext = lam.values.iter().map(|v| v[(0, 0)].abs()).fold(0.0, f64::max);
        assert!((ext - 0.15).abs() < 1e-12, "{ext}");
        assert!((lam.interpolate(&[0.0])[(0, 0)] - 0.15).abs() < 1e-12);
        assert!((lam.interpolate(&[-0.5])[(0, 0)] + 0.15).abs() < 1e-12);
        assert!(lam.interpolate(&[-0.25])[(0, 0)].abs() < 1e-12);
        // Exact L² norm of the triangle wave: 0.15/√3.
        assert!((lam.l2_norm - 0.15 / 3f64.sqrt()).abs() < 1e-12);
        assert!((lam.h1_seminorm - 0.6).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_flux_is_constant() {
        let spec = CoefficientSpec::Sinusoidal {
            mean: MatrixInput::Scalar(2.0),
            amplitude: MatrixInput::Scalar(1.0),
            wavenumbers: vec![1],
        };
        let medium = scalar_medium(1, &spec, &[512]);
        let lam = solve_corrector(&medium, &[512]).unwrap();
        let flux = flux_1d(&medium, &lam).unwrap();
        let mean = flux.iter().sum::<f64>() / flux.len() as f64;
        for f in &flux {
            assert!((f - mean).abs() <= 1e-8 * mean);
        }
        let eff = effective_matrix(&medium, &lam).unwrap();
        // Harmonic mean of the midpoint samples; √3 up to the (spectrally small) midpoint rule error.
        let oracle = 1.0 / (0..512).map(|i| 1.0 / (2.0 + (2.0 * std::f64::consts::PI * (-0.5 + (i as f64 + 0.5) / 512.0)).sin())).sum::<f64>() * 512.0;
        assert!((eff.g0_real[(0, 0)] - oracle).abs() < 1e-12);
        assert!((eff.g0_real[(0, 0)] - 3f64.sqrt()).abs() < 1e-6);
        assert!((eff.voigt_real[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn layered_two_dimensional_medium() {
        let medium = scalar_medium(2, &two_phase(0), &[32, 32]);
        let lam = solve_corrector(&medium, &[32, 32]).unwrap();
        let eff = effective_matrix(&medium, &lam).unwrap();
        assert!((eff.g0_real[(0, 0)] - 1.6).abs() < 1e-10);
        assert!((eff.g0_real[(1, 1)] - 2.5).abs() < 1e-10);
        assert!(eff.g0_real[(0, 1)].abs() < 1e-10);
        assert!(lam.mean_residual < 1e-10);
    }

    #[test]
    fn rotated_lattice_matches_axis_aligned_layers() {
        // Lattice basis swapped: layers vary along x₂ now.
        let basis = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let lattice = build_lattice(&basis).unwrap();
        let field = sample_coefficient(&two_phase(0), &[16, 16], 2).unwrap();
        let medium = Medium::new(lattice, field, SymbolFamily::gradient(2)).unwrap();
        let lam = solve_corrector(&medium, &[16, 16]).unwrap();
        let eff = effective_matrix(&medium, &lam).unwrap();
        assert!((eff.g0_real[(0, 0)] - 2.5).abs() < 1e-10);
        assert!((eff.g0_real[(1, 1)] - 1.6).abs() < 1e-10);
    }

    #[test]
    fn complex_hermitian_coefficient_stays_hermitian() {
        // g = [[2, i·s(τ)], [-i·s(τ), 2]] with a two-phase s.
        let values: Vec<DMatrix<C64>> = (0..16)
            .map(|i| {
                let s = if i < 8 { 0.5 } else { -0.8 };
                DMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.0, s), C64::new(0.0, -s), C64::new(2.0, 0.0)])
            })
            .collect();
        let field = CoefficientField::from_samples(vec![16], values, Interpolation::PiecewiseConstant).unwrap();
        let b = vec![DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)])];
        let symbol = SymbolFamily::new(b, 2).unwrap();
        let medium = Medium::new(Lattice::unit(1), field, symbol).unwrap();
        let lam = solve_corrector(&medium, &[16]).unwrap();
        let eff = effective_matrix(&medium, &lam).unwrap();
        // 1D with b = I: g0 is the matrix harmonic mean.
        let oracle = eff.reuss.clone();
        assert!((&eff.g0 - &oracle).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
        assert!(crate::linalg::hermitian_defect(&eff.g0) < 1e-12);
    }

    #[test]
    fn ledger_constants() {
        let medium = scalar_medium(1, &two_phase(0), &[64]);
        let lam = solve_corrector(&medium, &[64]).unwrap();
        let ledger = ConstantsLedger::new(&medium, &lam, 1.0);
        assert!((ledger.c_star - 2f64.sqrt()).abs() < 1e-14);
        assert!((ledger.c_star_printed - 1.0).abs() < 1e-14);
        assert!(ledger.is_valid());
    }
}
