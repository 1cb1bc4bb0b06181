//! P1 (d = 1) and Q1 (d = 2) assembly of the Dirichlet forms and Sobolev Gram matrices.
//!
//! Unknowns are ordered node-major: dof = node·nc + component. Coefficients are
//! evaluated once per element at its center; element integrals use 2-point Gauss
//! per axis, which is exact for products of Q1 gradients.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::domain::grid::DomainGrid;
use crate::error::{Error, Result};
use crate::linalg::{csr_axpby, csr_from_triplets, csr_matvec, csr_select, csr_symmetry_defect, SpdSolver};
use crate::periodic::{ensure_resolved, Medium};

/// Relative symmetry tolerance of assembled stiffness matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorLabel {
    Heterogeneous { epsilon: f64 },
    Effective,
}

/// Reference-element gradient products ∫ ∂_k φ_a ∂_j φ_b, indexed [k][j][a][b].
pub(crate) struct ElementTable {
    pub grad: Vec<Vec<Vec<Vec<f64>>>>,
    /// ∫ ∂_k φ_a, indexed [k][a].
    pub first: Vec<Vec<f64>>,
}

impl ElementTable {
    pub fn new(h: &[f64]) -> Self {
        let d = h.len();
        let nv = 1usize << d;
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let vol: f64 = h.iter().product();
        let mut grad = vec![vec![vec![vec![0.0; nv]; nv]; d]; d];
        let mut first = vec![vec![0.0; nv]; d];
        for q in 0..(1usize << d) {
            let xi: Vec<f64> = (0..d).map(|a| g[q >> a & 1]).collect();
            let w = vol / nv as f64;
            // ∂_j φ_a at the Gauss point.
            let dphi = |a: usize, j: usize| -> f64 {
                let mut v = 1.0;
                for ax in 0..d {
                    let up = a >> ax & 1 == 1;
                    if ax == j {
                        v *= if up { 1.0 / h[ax] } else { -1.0 / h[ax] };
                    } else {
                        v *= if up { xi[ax] } else { 1.0 - xi[ax] };
                    }
                }
                v
            };
            for k in 0..d {
                for a in 0..nv {
                    first[k][a] += w * dphi(a, k);
                }
                for j in 0..d {
                    for a in 0..nv {
                        for b in 0..nv {
                            grad[k][j][a][b] += w * dphi(a, k) * dphi(b, j);
                        }
                    }
                }
            }
        }
        ElementTable { grad, first }
    }
}

/// Assembles the all-node matrix of ∫⟨g b(∇)u, b(∇)v⟩ with per-element coefficient `coef`.
pub fn assemble_form(grid: &DomainGrid, b: &[DMatrix<f64>], coef: impl Fn(&[f64]) -> DMatrix<f64>) -> Result<CsrMatrix<f64>> {
    let d = grid.dim();
    if b.len() != d {
        return Err(Error::Dimension(format!("symbol has {} matrices for a {d}-dimensional grid", b.len())));
    }
    let nc = b[0].ncols();
    let mr = b[0].nrows();
    let table = ElementTable::new(grid.h());
    let nv = 1usize << d;
    let ndof = grid.node_count() * nc;
    let mut trip = Vec::with_capacity(grid.element_count() * nv * nv * nc * nc);
    for e in 0..grid.element_count() {
        let g = coef(&grid.element_center(e));
        if g.nrows() != mr || g.ncols() != mr {
            return Err(Error::Dimension(format!("coefficient is {}x{}, symbol rows {mr}", g.nrows(), g.ncols())));
        }
        // C_kj = b_kᵀ g b_j
        let c: Vec<Vec<DMatrix<f64>>> = (0..d).map(|k| (0..d).map(|j| b[k].transpose() * &g * &b[j]).collect()).collect();
        let nodes = grid.element_nodes(e);
        for a in 0..nv {
            for bb in 0..nv {
                for ci in 0..nc {
                    for cj in 0..nc {
                        let mut v = 0.0;
                        for k in 0..d {
                            for j in 0..d {
                                v += c[k][j][(ci, cj)] * table.grad[k][j][a][bb];
                            }
                        }
                        if v != 0.0 {
                            trip.push((nodes[a] * nc + ci, nodes[bb] * nc + cj, v));
                        }
                    }
                }
            }
        }
    }
    Ok(csr_from_triplets(ndof, ndof, &trip))
}

/// Unit-coefficient Laplacian Σ_j ∫ ∂_j u ∂_j v acting componentwise, all nodes.
pub fn assemble_laplacian(grid: &DomainGrid, nc: usize) -> CsrMatrix<f64> {
    let d = grid.dim();
    let table = ElementTable::new(grid.h());
    let nv = 1usize << d;
    let ndof = grid.node_count() * nc;
    let mut trip = Vec::with_capacity(grid.element_count() * nv * nv * nc);
    for e in 0..grid.element_count() {
        let nodes = grid.element_nodes(e);
        for a in 0..nv {
            for b in 0..nv {
                let v: f64 = (0..d).map(|j| table.grad[j][j][a][b]).sum();
                for c in 0..nc {
                    trip.push((nodes[a] * nc + c, nodes[b] * nc + c, v));
                }
            }
        }
    }
    csr_from_triplets(ndof, ndof, &trip)
}

/// Lumped mass per dof (all nodes).
pub fn lumped_mass(grid: &DomainGrid, nc: usize) -> Vec<f64> {
    let mut m = Vec::with_capacity(grid.node_count() * nc);
    for idx in 0..grid.node_count() {
        let w = grid.node_weight(idx);
        m.extend(std::iter::repeat(w).take(nc));
    }
    m
}

fn diag_csr(values: &[f64]) -> CsrMatrix<f64> {
    let trip: Vec<(usize, usize, f64)> = values.iter().enumerate().map(|(i, v)| (i, i, *v)).collect();
    csr_from_triplets(values.len(), values.len(), &trip)
}

fn scale_rows(a: &mut CsrMatrix<f64>, w: &[f64]) {
    let offsets = a.row_offsets().to_vec();
    let vals = a.values_mut();
    for i in 0..w.len() {
        for v in &mut vals[offsets[i]..offsets[i + 1]] {
            *v *= w[i];
        }
    }
}

/// Second-difference operators on all-node fields: one matrix per pure derivative
/// (with row weights) plus the cell-centered mixed derivative in 2D.
fn second_differences(grid: &DomainGrid, nc: usize) -> Result<Vec<(CsrMatrix<f64>, Vec<f64>, f64)>> {
    let d = grid.dim();
    if grid.cells().iter().any(|&c| c < 3) {
        return Err(Error::InvalidInput(
            "discrete H2 needs at least 4 nodes per axis for one-sided boundary second differences".into(),
        ));
    }
    let ndof = grid.node_count() * nc;
    let mut out = Vec::new();
    for j in 0..d {
        let h2 = grid.h()[j] * grid.h()[j];
        let nj = grid.cells()[j];
        let mut trip = Vec::new();
        let mut w = Vec::with_capacity(ndof);
        for idx in 0..grid.node_count() {
            let multi = grid.multi_index(idx);
            let i = multi[j];
            let at = |k: usize| {
                let mut m = multi.clone();
                m[j] = k;
                grid.node_index(&m)
            };
            let stencil: Vec<(usize, f64)> = if i == 0 {
                vec![(at(0), 2.0), (at(1), -5.0), (at(2), 4.0), (at(3), -1.0)]
            } else if i == nj {
                vec![(at(nj), 2.0), (at(nj - 1), -5.0), (at(nj - 2), 4.0), (at(nj - 3), -1.0)]
            } else {
                vec![(at(i - 1), 1.0), (at(i), -2.0), (at(i + 1), 1.0)]
            };
            for c in 0..nc {
                for &(node, coef) in &stencil {
                    trip.push((idx * nc + c, node * nc + c, coef / h2));
                }
                w.push(grid.node_weight(idx));
            }
        }
        out.push((csr_from_triplets(ndof, ndof, &trip), w, 1.0));
    }
    if d == 2 {
        let (h0, h1) = (grid.h()[0], grid.h()[1]);
        let ne = grid.element_count();
        let mut trip = Vec::new();
        let mut w = Vec::with_capacity(ne * nc);
        for e in 0..ne {
            let nodes = grid.element_nodes(e);
            let signs = [1.0, -1.0, -1.0, 1.0];
            for c in 0..nc {
                for (node, s) in nodes.iter().zip(signs) {
                    trip.push((e * nc + c, node * nc + c, s / (h0 * h1)));
                }
                w.push(h0 * h1);
            }
        }
        // ∂₁₂ and ∂₂₁ both enter the H² seminorm.
        out.push((csr_from_triplets(ne * nc, ndof, &trip), w, 2.0));
    }
    Ok(out)
}

/// Sobolev Gram matrices of a grid, independent of the coefficient.
pub struct SobolevGrams {
    pub grid: DomainGrid,
    pub nc: usize,
    /// Lumped mass on all dofs.
    pub mass_full: Vec<f64>,
    /// Lumped mass on interior dofs.
    pub mass: Vec<f64>,
    pub laplacian_full: CsrMatrix<f64>,
    pub laplacian: CsrMatrix<f64>,
    pub gram_h1_full: CsrMatrix<f64>,
    pub gram_h1: CsrMatrix<f64>,
    gram_h2: Option<CsrMatrix<f64>>,
    interior_dofs: Vec<usize>,
    laplacian_solver: OnceLock<SpdSolver>,
    h1_solver: OnceLock<SpdSolver>,
    h2_solver: OnceLock<SpdSolver>,
}

impl std::fmt::Debug for SobolevGrams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SobolevGrams").field("cells", &self.grid.cells()).field("nc", &self.nc).finish()
    }
}

impl SobolevGrams {
    pub fn new(grid: &DomainGrid, nc: usize) -> Arc<Self> {
        let interior_dofs: Vec<usize> = grid.interior_nodes().iter().flat_map(|&n| (0..nc).map(move |c| n * nc + c)).collect();
        let mass_full = lumped_mass(grid, nc);
        let mass: Vec<f64> = interior_dofs.iter().map(|&i| mass_full[i]).collect();
        let laplacian_full = assemble_laplacian(grid, nc);
        let laplacian = csr_select(&laplacian_full, &interior_dofs, &interior_dofs);
        let gram_h1_full = csr_axpby(1.0, &diag_csr(&mass_full), 1.0, &laplacian_full);
        let gram_h1 = csr_axpby(1.0, &diag_csr(&mass), 1.0, &laplacian);
        let gram_h2 = second_differences(grid, nc).ok().map(|ops| {
            let mut acc = gram_h1.clone();
            for (op, w, factor) in ops {
                let rows: Vec<usize> = (0..op.nrows()).collect();
                let restricted = csr_select(&op, &rows, &interior_dofs);
                let mut weighted = restricted.clone();
                scale_rows(&mut weighted, &w);
                let prod = &restricted.transpose() * &weighted;
                acc = csr_axpby(1.0, &acc, factor, &prod);
            }
            acc
        });
        Arc::new(SobolevGrams {
            grid: grid.clone(),
            nc,
            mass_full,
            mass,
            laplacian_full,
            laplacian,
            gram_h1_full,
            gram_h1,
            gram_h2,
            interior_dofs,
            laplacian_solver: OnceLock::new(),
            h1_solver: OnceLock::new(),
            h2_solver: OnceLock::new(),
        })
    }

    pub fn n_interior_dofs(&self) -> usize {
        self.interior_dofs.len()
    }
    pub fn n_dofs(&self) -> usize {
        self.mass_full.len()
    }
    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn gram_h2(&self) -> Result<&CsrMatrix<f64>> {
        self.gram_h2.as_ref().ok_or_else(|| {
            Error::InvalidInput("discrete H2 needs at least 4 nodes per axis for one-sided boundary second differences".into())
        })
    }

    fn cached<'a>(cell: &'a OnceLock<SpdSolver>, a: &CsrMatrix<f64>) -> Result<&'a SpdSolver> {
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let s = SpdSolver::new(a)?;
        Ok(cell.get_or_init(|| s))
    }

    pub fn laplacian_solver(&self) -> Result<&SpdSolver> {
        Self::cached(&self.laplacian_solver, &self.laplacian)
    }
    pub fn h1_solver(&self) -> Result<&SpdSolver> {
        Self::cached(&self.h1_solver, &self.gram_h1)
    }
    pub fn h2_solver(&self) -> Result<&SpdSolver> {
        let g = self.gram_h2()?;
        Self::cached(&self.h2_solver, g)
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.interior_dofs.len(), self.interior_dofs.iter().map(|&i| full[i]))
    }

    pub fn embed(&self, interior: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dofs());
        for (k, &i) in self.interior_dofs.iter().enumerate() {
            out[i] = interior[k];
        }
        out
    }
}

/// Dirichlet-constrained stiffness with the grid's Gram matrices.
pub struct DiscreteOperator {
    pub label: OperatorLabel,
    pub grams: Arc<SobolevGrams>,
    /// Form on all dofs (used to apply A_ε weakly to fields with boundary values).
    pub stiffness_full: CsrMatrix<f64>,
    /// Form restricted to interior dofs.
    pub stiffness: CsrMatrix<f64>,
    solver: SpdSolver,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("label", &self.label)
            .field("n", &self.stiffness.nrows())
            .finish()
    }
}

impl DiscreteOperator {
    pub fn from_full(label: OperatorLabel, grams: Arc<SobolevGrams>, stiffness_full: CsrMatrix<f64>) -> Result<Self> {
        let defect = csr_symmetry_defect(&stiffness_full);
        if defect > SYMMETRY_TOL {
            return Err(Error::Solver(format!("assembled stiffness is not symmetric (relative defect {defect:e})")));
        }
        let dofs = grams.interior_dofs().to_vec();
        let stiffness = csr_select(&stiffness_full, &dofs, &dofs);
        let solver = SpdSolver::new(&stiffness).map_err(|e| Error::Solver(format!("assembled stiffness is not positive definite: {e}")))?;
        Ok(DiscreteOperator {
            label,
            grams,
            stiffness_full,
            stiffness,
            solver,
        })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grams.grid
    }
    pub fn nc(&self) -> usize {
        self.grams.nc
    }
    pub fn n(&self) -> usize {
        self.stiffness.nrows()
    }
    pub fn mass(&self) -> &[f64] {
        &self.grams.mass
    }
    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    /// Solves stiffness·u = rhs on interior dofs.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.solver.solve(rhs)
    }

    /// Interior rows of the weak application of the form to an all-node field.
    pub fn apply_weak(&self, full: &DVector<f64>) -> DVector<f64> {
        self.grams.restrict(&csr_matvec(&self.stiffness_full, full))
    }
}

/// Discrete A_{D,ε}: coefficient g(x/ε) at element centers.
pub fn assemble_heterogeneous(medium: &Medium, epsilon: f64, grams: &Arc<SobolevGrams>) -> Result<DiscreteOperator> {
    let grid = &grams.grid;
    ensure_resolved(&medium.lattice, epsilon, grid)?;
    if grams.nc != medium.nr() {
        return Err(Error::Dimension(format!("grams have {} components, medium needs {}", grams.nc, medium.nr())));
    }
    let full = assemble_form(grid, medium.b_real(), |x| medium.g_real_scaled(x, epsilon))?;
    DiscreteOperator::from_full(OperatorLabel::Heterogeneous { epsilon }, grams.clone(), full)
}

/// Discrete A⁰_D with the real form of g⁰.
pub fn assemble_effective(g0_real: &DMatrix<f64>, b_real: &[DMatrix<f64>], grams: &Arc<SobolevGrams>) -> Result<DiscreteOperator> {
    let full = assemble_form(&grams.grid, b_real, |_| g0_real.clone())?;
    DiscreteOperator::from_full(OperatorLabel::Effective, grams.clone(), full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{csr_to_dense, dense_symmetric_eigen};
    use std::f64::consts::PI;

    fn smallest_generalized(op: &DiscreteOperator) -> f64 {
        let k = csr_to_dense(&op.stiffness);
        let m = op.mass();
        let s = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] / (m[i] * m[j]).sqrt());
        dense_symmetric_eigen(s).unwrap().0[0]
    }

    #[test]
    fn laplacian_eigenvalue_1d() {
        let mut prev = f64::INFINITY;
        for cells in [16, 32, 64] {
            let grid = DomainGrid::new(&[1.0], &[cells]).unwrap();
            let grams = SobolevGrams::new(&grid, 1);
            let op = assemble_effective(&DMatrix::identity(1, 1), &[DMatrix::identity(1, 1)], &grams).unwrap();
            let err = (smallest_generalized(&op) - PI * PI).abs();
            assert!(err < 1.1 * PI.powi(4) / (12.0 * (cells * cells) as f64) + 1e-9);
            assert!(err < prev / 3.5);
            prev = err;
        }
    }

    #[test]
    fn laplacian_eigenvalue_2d() {
        let grid = DomainGrid::new(&[1.0, 1.0], &[24, 24]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let b = [DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), DMatrix::from_column_slice(2, 1, &[0.0, 1.0])];
        let op = assemble_effective(&DMatrix::identity(2, 2), &b, &grams).unwrap();
        let lam = smallest_generalized(&op);
        assert!((lam - 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 5e-3, "{lam}");
    }

    #[test]
    fn h2_gram_needs_four_nodes() {
        let grid = DomainGrid::new(&[1.0], &[2]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        assert!(grams.gram_h2().is_err());
    }
}
