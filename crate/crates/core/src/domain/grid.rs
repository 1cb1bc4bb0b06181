use crate::error::{Error, Result};
use crate::periodic::Lattice;

/// Uniform tensor grid on the interval (0, L) or the rectangle (0, L₁)×(0, L₂).
/// Node index runs fastest along axis 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGrid {
    lengths: Vec<f64>,
    cells: Vec<usize>,
    h: Vec<f64>,
    dof_of_node: Vec<Option<usize>>,
    interior: Vec<usize>,
}

impl DomainGrid {
    pub fn new(lengths: &[f64], cells: &[usize]) -> Result<Self> {
        let d = lengths.len();
        if !(1..=2).contains(&d) || cells.len() != d {
            return Err(Error::Dimension(format!("domains are intervals or rectangles; got {d} lengths and {} cell counts", cells.len())));
        }
        if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) || cells.iter().any(|&c| c < 2) {
            return Err(Error::InvalidInput(format!("bad grid: lengths {lengths:?}, cells {cells:?}")));
        }
        let h: Vec<f64> = lengths.iter().zip(cells).map(|(l, c)| l / *c as f64).collect();
        let mut grid = DomainGrid {
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
            h,
            dof_of_node: Vec::new(),
            interior: Vec::new(),
        };
        grid.index_interior();
        Ok(grid)
    }

    /// Grid with `points_per_period` cells per ε-period of a diagonal lattice.
    pub fn for_epsilon(lengths: &[f64], lattice: &Lattice, epsilon: f64, points_per_period: usize) -> Result<Self> {
        if !lattice.is_diagonal() {
            return Err(Error::InvalidInput("period-aligned grids need an axis-aligned lattice".into()));
        }
        let periods = lattice.axis_periods();
        let mut cells = Vec::with_capacity(lengths.len());
        for (j, &l) in lengths.iter().enumerate() {
            let h = epsilon * periods[j] / points_per_period as f64;
            let c = l / h;
            let rounded = c.round();
            if (c - rounded).abs() > 1e-6 * c.max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "axis {j}: length {l} is not a whole number of cells of width ε·a/{points_per_period} = {h}"
                )));
            }
            cells.push(rounded as usize);
        }
        Self::new(lengths, &cells)
    }

    fn index_interior(&mut self) {
        let n = self.node_count();
        self.dof_of_node = vec![None; n];
        self.interior.clear();
        for idx in 0..n {
            if !self.is_boundary(idx) {
                self.dof_of_node[idx] = Some(self.interior.len());
                self.interior.push(idx);
            }
        }
    }

    pub fn refine(&self, factor: usize) -> Result<Self> {
        let cells: Vec<usize> = self.cells.iter().map(|c| c * factor).collect();
        Self::new(&self.lengths, &cells)
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }
    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }
    pub fn element_count(&self) -> usize {
        self.cells.iter().product()
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        self.cells
            .iter()
            .map(|c| {
                let i = rem % (c + 1);
                rem /= c + 1;
                i
            })
            .collect()
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, c) in multi.iter().zip(&self.cells) {
            idx += i * stride;
            stride *= c + 1;
        }
        idx
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.h).map(|(i, h)| *i as f64 * h).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx).iter().zip(&self.cells).any(|(i, c)| *i == 0 || i == c)
    }

    /// Corner nodes of element `e`, ordered by the bit pattern (bit a = upper along axis a).
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let d = self.dim();
        let mut rem = e;
        let lower: Vec<usize> = self
            .cells
            .iter()
            .map(|c| {
                let i = rem % c;
                rem /= c;
                i
            })
            .collect();
        (0..(1usize << d))
            .map(|corner| {
                let multi: Vec<usize> = (0..d).map(|a| lower[a] + (corner >> a & 1)).collect();
                self.node_index(&multi)
            })
            .collect()
    }

    pub fn element_center(&self, e: usize) -> Vec<f64> {
        let mut rem = e;
        self.cells
            .iter()
            .zip(&self.h)
            .map(|(c, h)| {
                let i = rem % c;
                rem /= c;
                (i as f64 + 0.5) * h
            })
            .collect()
    }

    pub fn element_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Lumped mass weight ∫φ_a of node `idx`.
    pub fn node_weight(&self, idx: usize) -> f64 {
        self.multi_index(idx)
            .iter()
            .zip(self.cells.iter().zip(&self.h))
            .map(|(i, (c, h))| if *i == 0 || i == c { 0.5 * h } else { *h })
            .product()
    }

    /// Enclosing box extending the domain by at least `margin` on every side.
    pub fn box_grid(&self, margin: f64) -> Result<BoxGrid> {
        if !(margin > 0.0) {
            return Err(Error::Margin(format!("margin must be positive, got {margin}")));
        }
        let pad: Vec<usize> = self.h.iter().map(|h| (margin / h - 1e-9).ceil() as usize).collect();
        Ok(BoxGrid {
            cells: self.cells.iter().zip(&pad).map(|(c, p)| c + 2 * p).collect(),
            pad,
            h: self.h.clone(),
            margin,
        })
    }

    /// Interior restriction of an all-node field with `nc` components per node.
    pub fn restrict_interior(&self, field: &nalgebra::DVector<f64>, nc: usize) -> nalgebra::DVector<f64> {
        let mut out = nalgebra::DVector::zeros(self.n_interior() * nc);
        for (k, &node) in self.interior.iter().enumerate() {
            for c in 0..nc {
                out[k * nc + c] = field[node * nc + c];
            }
        }
        out
    }

    /// All-node field from interior values (zero on the boundary).
    pub fn embed_interior(&self, values: &nalgebra::DVector<f64>, nc: usize) -> nalgebra::DVector<f64> {
        let mut out = nalgebra::DVector::zeros(self.node_count() * nc);
        for (k, &node) in self.interior.iter().enumerate() {
            for c in 0..nc {
                out[node * nc + c] = values[k * nc + c];
            }
        }
        out
    }

    /// Samples `f(x)` (returning `nc` components) at every node.
    pub fn sample(&self, nc: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> nalgebra::DVector<f64> {
        let mut out = nalgebra::DVector::zeros(self.node_count() * nc);
        for idx in 0..self.node_count() {
            let v = f(&self.node_coords(idx));
            for c in 0..nc {
                out[idx * nc + c] = v[c];
            }
        }
        out
    }
}

/// Box grid sharing the mesh width of a domain grid; domain node i maps to box node i + pad.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid {
    pub cells: Vec<usize>,
    pub pad: Vec<usize>,
    pub h: Vec<f64>,
    pub margin: f64,
}

impl BoxGrid {
    pub fn dim(&self) -> usize {
        self.cells.len()
    }
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }
    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }
    /// Actual margin (a whole number of cells) along each axis.
    pub fn actual_margin(&self) -> Vec<f64> {
        self.pad.iter().zip(&self.h).map(|(p, h)| *p as f64 * h).collect()
    }
    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, c) in multi.iter().zip(&self.cells) {
            idx += i * stride;
            stride *= c + 1;
        }
        idx
    }
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rem = idx;
        self.cells
            .iter()
            .map(|c| {
                let i = rem % (c + 1);
                rem /= c + 1;
                i
            })
            .collect()
    }
    /// Physical coordinates (domain origin at 0).
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(self.pad.iter().zip(&self.h))
            .map(|(i, (p, h))| (*i as f64 - *p as f64) * h)
            .collect()
    }
    pub fn node_weight(&self, idx: usize) -> f64 {
        self.multi_index(idx)
            .iter()
            .zip(self.cells.iter().zip(&self.h))
            .map(|(i, (c, h))| if *i == 0 || i == c { 0.5 * h } else { *h })
            .product()
    }
    /// Box node index of domain node `domain_multi`.
    pub fn from_domain(&self, domain_multi: &[usize]) -> usize {
        let shifted: Vec<usize> = domain_multi.iter().zip(&self.pad).map(|(i, p)| i + p).collect();
        self.node_index(&shifted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_boundary() {
        let g = DomainGrid::new(&[1.0, 2.0], &[4, 6]).unwrap();
        assert_eq!(g.node_count(), 35);
        assert_eq!(g.n_interior(), 3 * 5);
        assert!(g.is_boundary(0));
        let mid = g.node_index(&[2, 3]);
        assert!(!g.is_boundary(mid));
        assert_eq!(g.node_coords(mid), vec![0.5, 1.0]);
        let total: f64 = (0..g.node_count()).map(|i| g.node_weight(i)).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn element_nodes_order() {
        let g = DomainGrid::new(&[1.0, 1.0], &[2, 2]).unwrap();
        let nodes = g.element_nodes(3);
        assert_eq!(nodes, vec![4, 5, 7, 8]);
        assert_eq!(g.element_center(3), vec![0.75, 0.75]);
    }

    #[test]
    fn epsilon_grid() {
        let g = DomainGrid::for_epsilon(&[1.0], &Lattice::unit(1), 1.0 / 16.0, 32).unwrap();
        assert_eq!(g.cells(), &[512]);
        assert!(DomainGrid::for_epsilon(&[1.0], &Lattice::unit(1), 0.3, 32).is_err());
    }

    #[test]
    fn box_offsets() {
        let g = DomainGrid::new(&[1.0], &[10]).unwrap();
        let b = g.box_grid(0.25).unwrap();
        assert_eq!(b.pad, vec![3]);
        assert_eq!(b.node_count(), 17);
        assert!((b.node_coords(0)[0] + 0.3).abs() < 1e-15);
        assert_eq!(b.from_domain(&[0]), 3);
    }
}
