//! First-order approximation v_ε = u₀ + εK(ε)u₀ with
//! K(ε) = R_O Λ^ε S_ε b(D) P_O, the H⁻¹ residual of the corrected field, and
//! the error curves compared by the harness.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cell::CorrectorField;
use crate::domain::assembly::{DiscreteOperator, SobolevGrams};
use crate::domain::extension::{ExtensionOperator, ReflectionKind};
use crate::domain::grid::{BoxGrid, DomainGrid};
use crate::domain::norms::{hminus1_functional, l2_norm};
use crate::domain::steklov::{half_widths, steklov_smooth};
use crate::error::{Error, Result};
use crate::evolution::trajectory::Trajectory;
use crate::periodic::Medium;

/// The corrector map u ↦ εK(ε)u on all-node domain fields.
#[derive(Debug)]
pub struct CorrectorOperator {
    pub epsilon: f64,
    pub extension: ExtensionOperator,
    b_real: Vec<DMatrix<f64>>,
    lattice: crate::periodic::Lattice,
    /// Λ̃(x/ε) at domain nodes, nr × mr.
    lambda_at_nodes: Vec<DMatrix<f64>>,
    nr: usize,
    mr: usize,
}

/// Default box margin: two ε-periods of the widest cell extent.
pub fn default_margin(medium: &Medium, epsilon: f64) -> f64 {
    2.0 * epsilon * medium.lattice.max_extent()
}

impl CorrectorOperator {
    pub fn new(medium: &Medium, corrector: &CorrectorField, grid: &DomainGrid, epsilon: f64, margin: f64, kind: ReflectionKind) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidInput(format!("ε must lie in (0,1], got {epsilon}")));
        }
        if corrector.dim() != medium.dim() || grid.dim() != medium.dim() {
            return Err(Error::Dimension("corrector, medium and grid dimensions differ".into()));
        }
        let extension = ExtensionOperator::new(grid, margin, kind, medium.nr())?;
        let widths = half_widths(&medium.lattice, epsilon)?;
        for (a, (w, m)) in widths.iter().zip(extension.box_grid.actual_margin()).enumerate() {
            if *w >= m {
                return Err(Error::Margin(format!(
                    "axis {a}: ε = {epsilon} needs a smoothing half-width {w} but the box margin is {m}"
                )));
            }
        }
        let lambda_at_nodes = (0..grid.node_count())
            .map(|i| {
                let y: Vec<f64> = grid.node_coords(i).iter().map(|v| v / epsilon).collect();
                corrector.interpolate(&medium.lattice.cell_coords(&y))
            })
            .collect();
        Ok(CorrectorOperator {
            epsilon,
            extension,
            b_real: medium.b_real().to_vec(),
            lattice: medium.lattice.clone(),
            lambda_at_nodes,
            nr: medium.nr(),
            mr: medium.mr(),
        })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.extension.grid
    }

    pub fn box_grid(&self) -> &BoxGrid {
        &self.extension.box_grid
    }

    /// b(∇)ũ on the box by centered differences (one-sided at the box edges).
    pub fn symbol_gradient(&self, box_field: &DVector<f64>) -> DVector<f64> {
        let bg = &self.extension.box_grid;
        let shape = bg.nodes_per_axis();
        let (nr, mr) = (self.nr, self.mr);
        let mut out = DVector::zeros(bg.node_count() * mr);
        for idx in 0..bg.node_count() {
            let multi = bg.multi_index(idx);
            for (j, bj) in self.b_real.iter().enumerate() {
                let i = multi[j];
                let at = |k: usize| {
                    let mut m = multi.clone();
                    m[j] = k;
                    bg.node_index(&m)
                };
                let (lo, hi, span) = if i == 0 {
                    (at(0), at(1), bg.h[j])
                } else if i + 1 == shape[j] {
                    (at(i - 1), at(i), bg.h[j])
                } else {
                    (at(i - 1), at(i + 1), 2.0 * bg.h[j])
                };
                for c in 0..nr {
                    let deriv = (box_field[hi * nr + c] - box_field[lo * nr + c]) / span;
                    if deriv == 0.0 {
                        continue;
                    }
                    for r in 0..mr {
                        out[idx * mr + r] += bj[(r, c)] * deriv;
                    }
                }
            }
        }
        out
    }

    /// S_ε b(D) P_O u on the box (mr components per node).
    pub fn smoothed_gradient(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let ext = self.extension.extend(u);
        let grad = self.symbol_gradient(&ext);
        steklov_smooth(&grad, &self.extension.box_grid, self.mr, &self.lattice, self.epsilon)
    }

    /// εK(ε)u as an all-node domain field.
    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let expected = self.grid().node_count() * self.nr;
        if u.len() != expected {
            return Err(Error::Dimension(format!("field has {} entries, expected {expected}", u.len())));
        }
        let smooth = self.smoothed_gradient(u)?;
        let nodes = self.extension.domain_box_nodes();
        let mut out = DVector::zeros(expected);
        for (i, &b) in nodes.iter().enumerate() {
            let g = smooth.rows(b * self.mr, self.mr);
            let v = &self.lambda_at_nodes[i] * g * self.epsilon;
            out.rows_mut(i * self.nr, self.nr).copy_from(&v);
        }
        Ok(out)
    }
}

/// v_ε split into its parts.
#[derive(Clone, Debug)]
pub struct CorrectedField {
    pub base: DVector<f64>,
    pub corrector_term: DVector<f64>,
    pub sum: DVector<f64>,
}

pub fn first_order_approx(u0: &DVector<f64>, k: &CorrectorOperator) -> Result<CorrectedField> {
    let corrector_term = k.apply(u0)?;
    let sum = u0 + &corrector_term;
    Ok(CorrectedField {
        base: u0.clone(),
        corrector_term,
        sum,
    })
}

/// ‖A_ε(f + εK(ε)f) − A⁰f‖_{H⁻¹(O)} with both operators applied weakly.
pub fn residual_hminus1(f: &DVector<f64>, k: &CorrectorOperator, het: &DiscreteOperator, eff: &DiscreteOperator) -> Result<f64> {
    if !std::sync::Arc::ptr_eq(&het.grams, &eff.grams) {
        return Err(Error::GridMismatch("heterogeneous and effective operators live on different Gram sets".into()));
    }
    let grams = &het.grams;
    let boundary = (f - grams.embed(&grams.restrict(f))).amax();
    if boundary > 1e-12 * f.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput("residual needs a field with zero boundary values".into()));
    }
    let corrected = first_order_approx(f, k)?;
    let r = het.apply_weak(&corrected.sum) - eff.apply_weak(f);
    hminus1_functional(&r, grams)
}

/// Per-time L² error curves.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ErrorCurves {
    pub times: Vec<f64>,
    /// ‖u_ε − u₀‖.
    pub u: Vec<f64>,
    /// ‖u_ε − v_ε + w_ε‖.
    pub combined: Vec<f64>,
    /// ‖w_ε − εK(ε)u₀‖.
    pub discrepancy: Vec<f64>,
    /// ‖εK(ε)u₀‖.
    pub corrector: Vec<f64>,
}

fn check_same(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch("trajectories have different time grids".into()));
    }
    if a.states.first().map(|s| s.len()) != b.states.first().map(|s| s.len()) {
        return Err(Error::GridMismatch("trajectories have different spatial grids".into()));
    }
    Ok(())
}

/// Exact nodal arithmetic, then lumped-mass L² norms on all nodes.
/// `corrector_terms[i]` is εK(ε)u₀ at `u_eps.times[i]`.
pub fn combined_error(
    u_eps: &Trajectory,
    u0: &Trajectory,
    w: &Trajectory,
    corrector_terms: &[DVector<f64>],
    grams: &SobolevGrams,
) -> Result<ErrorCurves> {
    check_same(u_eps, u0)?;
    check_same(u_eps, w)?;
    if corrector_terms.len() != u_eps.len() {
        return Err(Error::GridMismatch("one corrector term per time is required".into()));
    }
    let mass = &grams.mass_full;
    if u_eps.states.first().is_some_and(|s| s.len() != mass.len()) {
        return Err(Error::GridMismatch("trajectory does not match the Gram grid".into()));
    }
    let mut curves = ErrorCurves {
        times: u_eps.times.clone(),
        ..Default::default()
    };
    for i in 0..u_eps.len() {
        let (ue, u, wi, c) = (&u_eps.states[i], &u0.states[i], &w.states[i], &corrector_terms[i]);
        curves.u.push(l2_norm(&(ue - u), mass));
        curves.combined.push(l2_norm(&(ue - u - c + wi), mass));
        curves.discrepancy.push(l2_norm(&(wi - c), mass));
        curves.corrector.push(l2_norm(c, mass));
    }
    Ok(curves)
}
