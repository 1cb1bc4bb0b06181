//! Extension P_O from the domain to an enclosing box, and restriction R_O back.
//!
//! Each axis is extended by reflection across the faces and multiplied by a C^∞
//! cutoff equal to 1 within half the margin and 0 from the margin on. In 2D the
//! axis operators are tensorized, so corners get the double reflection.

use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::assembly::{assemble_laplacian, lumped_mass, SobolevGrams};
use crate::domain::grid::{BoxGrid, DomainGrid};
use crate::error::{Error, Result};
use crate::harness::opnorm::{operator_norm, Gram, OpNormOptions};
use crate::linalg::{csr_axpby, csr_from_triplets, csr_matvec, SpdSolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectionKind {
    /// ũ(-s) = u(s): bounded on H¹ only.
    Even,
    /// ũ(-s) = 3u(s) - 2u(2s): matches value and slope, bounded on H¹ and H².
    C1,
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        f(t) / (f(t) + f(1.0 - t))
    }
}

/// Cutoff as a function of the distance outside the domain.
pub fn cutoff(distance: f64, margin: f64) -> f64 {
    smooth_step(2.0 * (margin - distance) / margin)
}

/// 1D extension weights: box node b → list of (domain node, weight).
fn axis_weights(kind: ReflectionKind, cells: usize, pad: usize, h: f64, margin: f64) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = cells as i64;
    let mut rows = Vec::with_capacity(cells + 1 + 2 * pad);
    for b in 0..(cells + 1 + 2 * pad) {
        let i = b as i64 - pad as i64;
        if (0..=n).contains(&i) {
            rows.push(vec![(i as usize, 1.0)]);
            continue;
        }
        let s = if i < 0 { -i } else { i - n };
        let chi = cutoff(s as f64 * h, margin);
        if chi == 0.0 {
            rows.push(Vec::new());
            continue;
        }
        // Mirror index measured from the nearest face.
        let mirror = |k: i64| -> i64 { if i < 0 { k } else { n - k } };
        let row = match kind {
            ReflectionKind::Even => {
                // Even 2L-periodic extension, valid for any margin.
                let p = s.rem_euclid(2 * n);
                let k = if p > n { 2 * n - p } else { p };
                vec![(mirror(k) as usize, chi)]
            }
            ReflectionKind::C1 => {
                if 2 * s > n {
                    return Err(Error::Margin(format!(
                        "C1 reflection reaches {} cells into a domain of {} cells; margin must not exceed half the domain",
                        2 * s,
                        n
                    )));
                }
                vec![(mirror(s) as usize, 3.0 * chi), (mirror(2 * s) as usize, -2.0 * chi)]
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct ExtensionOperator {
    pub kind: ReflectionKind,
    pub grid: DomainGrid,
    pub box_grid: BoxGrid,
    pub nc: usize,
    /// Box dofs × domain dofs.
    pub matrix: CsrMatrix<f64>,
    domain_box_nodes: Vec<usize>,
}

impl ExtensionOperator {
    pub fn new(grid: &DomainGrid, margin: f64, kind: ReflectionKind, nc: usize) -> Result<Self> {
        let box_grid = grid.box_grid(margin)?;
        let d = grid.dim();
        let per_axis: Vec<Vec<Vec<(usize, f64)>>> = (0..d)
            .map(|a| axis_weights(kind, grid.cells()[a], box_grid.pad[a], grid.h()[a], margin))
            .collect::<Result<_>>()?;
        let mut trip = Vec::new();
        for bidx in 0..box_grid.node_count() {
            let multi = box_grid.multi_index(bidx);
            // Tensor product of the axis rows.
            let mut terms: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
            for a in 0..d {
                let mut next = Vec::new();
                for (idx, w) in &terms {
                    for &(k, wk) in &per_axis[a][multi[a]] {
                        let mut m = idx.clone();
                        m.push(k);
                        next.push((m, w * wk));
                    }
                }
                terms = next;
            }
            for (dm, w) in terms {
                let dnode = grid.node_index(&dm);
                for c in 0..nc {
                    trip.push((bidx * nc + c, dnode * nc + c, w));
                }
            }
        }
        let matrix = csr_from_triplets(box_grid.node_count() * nc, grid.node_count() * nc, &trip);
        let domain_box_nodes = (0..grid.node_count()).map(|i| box_grid.from_domain(&grid.multi_index(i))).collect();
        Ok(ExtensionOperator {
            kind,
            grid: grid.clone(),
            box_grid,
            nc,
            matrix,
            domain_box_nodes,
        })
    }

    pub fn extend(&self, field: &DVector<f64>) -> DVector<f64> {
        csr_matvec(&self.matrix, field)
    }

    pub fn restrict(&self, box_field: &DVector<f64>) -> DVector<f64> {
        let nc = self.nc;
        let mut out = DVector::zeros(self.grid.node_count() * nc);
        for (i, &b) in self.domain_box_nodes.iter().enumerate() {
            for c in 0..nc {
                out[i * nc + c] = box_field[b * nc + c];
            }
        }
        out
    }

    /// Box node index of each domain node.
    pub fn domain_box_nodes(&self) -> &[usize] {
        &self.domain_box_nodes
    }

    /// C_O: operator norm H¹(O) → H¹(box) on the discrete spaces.
    pub fn measure_norm(&self, grams: &Arc<SobolevGrams>) -> Result<f64> {
        let box_domain = DomainGrid::new(
            &self.box_grid.cells.iter().zip(&self.box_grid.h).map(|(c, h)| *c as f64 * h).collect::<Vec<_>>(),
            &self.box_grid.cells,
        )?;
        let bm = lumped_mass(&box_domain, self.nc);
        let bl = assemble_laplacian(&box_domain, self.nc);
        let diag: Vec<(usize, usize, f64)> = bm.iter().enumerate().map(|(i, v)| (i, i, *v)).collect();
        let box_h1 = csr_axpby(1.0, &csr_from_triplets(bm.len(), bm.len(), &diag), 1.0, &bl);
        let src_solver = SpdSolver::new(&grams.gram_h1_full)?;
        let tgt_solver = SpdSolver::new(&box_h1)?;
        let source = Gram::Sparse(&grams.gram_h1_full, &src_solver);
        let target = Gram::Sparse(&box_h1, &tgt_solver);
        let r = operator_norm(&self.matrix, &source, &target, &OpNormOptions::default())?;
        Ok(r.sigma_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::norms::{sobolev_norm, NormKind};
    use std::f64::consts::PI;

    #[test]
    fn restriction_after_extension_is_identity() {
        for kind in [ReflectionKind::Even, ReflectionKind::C1] {
            let grid = DomainGrid::new(&[1.0, 0.5], &[20, 10]).unwrap();
            let ext = ExtensionOperator::new(&grid, 0.2, kind, 2).unwrap();
            let f = grid.sample(2, |x| vec![x[0] * x[1], (3.0 * x[0]).cos()]);
            assert_eq!(ext.restrict(&ext.extend(&f)), f);
        }
    }

    #[test]
    fn even_reflection_of_linear_function() {
        let grid = DomainGrid::new(&[1.0], &[50]).unwrap();
        let ext = ExtensionOperator::new(&grid, 0.5, ReflectionKind::Even, 1).unwrap();
        let f = grid.sample(1, |x| vec![x[0]]);
        let e = ext.extend(&f);
        // x = -0.2 lies in the untouched half of the margin.
        let b = (0..ext.box_grid.node_count()).find(|&b| (ext.box_grid.node_coords(b)[0] + 0.2).abs() < 1e-12).unwrap();
        assert!((e[b] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn constant_field_stays_constant_near_domain() {
        let grid = DomainGrid::new(&[1.0], &[40]).unwrap();
        let ext = ExtensionOperator::new(&grid, 0.25, ReflectionKind::C1, 1).unwrap();
        let e = ext.extend(&grid.sample(1, |_| vec![2.0]));
        for b in 0..ext.box_grid.node_count() {
            let x = ext.box_grid.node_coords(b)[0];
            let dist = (-x).max(x - 1.0).max(0.0);
            if dist <= 0.125 {
                assert!((e[b] - 2.0).abs() < 1e-14);
            }
            if dist >= 0.25 {
                assert_eq!(e[b], 0.0);
            }
        }
    }

    #[test]
    fn c1_reflection_is_smooth_across_faces() {
        let grid = DomainGrid::new(&[1.0], &[400]).unwrap();
        let ext = ExtensionOperator::new(&grid, 0.25, ReflectionKind::C1, 1).unwrap();
        let e = ext.extend(&grid.sample(1, |x| vec![(PI * x[0]).sin() + x[0] * x[0]]));
        let p = ext.box_grid.pad[0];
        let h = grid.h()[0];
        let left_slope = (e[p] - e[p - 1]) / h;
        let right_slope = (e[p + 1] - e[p]) / h;
        assert!((left_slope - right_slope).abs() < 0.05);
    }

    #[test]
    fn sine_norm_ratio_bounded_by_measured_norm() {
        let grid = DomainGrid::new(&[1.0], &[64]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let ext = ExtensionOperator::new(&grid, 0.25, ReflectionKind::Even, 1).unwrap();
        let c_o = ext.measure_norm(&grams).unwrap();
        assert!(c_o >= 1.0);
        let f = grid.sample(1, |x| vec![(PI * x[0]).sin()]);
        let ef = ext.extend(&f);
        let bgrid = DomainGrid::new(&[64.0 / 64.0 + 2.0 * ext.box_grid.actual_margin()[0]], &ext.box_grid.cells).unwrap();
        let bgrams = SobolevGrams::new(&bgrid, 1);
        let ratio = sobolev_norm(&ef, &bgrams, NormKind::H1).unwrap() / sobolev_norm(&f, &grams, NormKind::H1).unwrap();
        assert!(ratio <= c_o * (1.0 + 1e-9));
        assert!(ratio <= 2.1, "{ratio}");
    }
}
