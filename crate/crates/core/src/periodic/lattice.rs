use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodicity lattice Γ with its centered cell Ω = {Σ τ_j a_j : τ_j ∈ (-1/2, 1/2)}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeInput", into = "LatticeInput")]
pub struct Lattice {
    /// Basis vectors stored as columns.
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    cell_volume: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeInput {
    /// One basis vector per row.
    pub basis: Vec<Vec<f64>>,
}

impl TryFrom<LatticeInput> for Lattice {
    type Error = Error;
    fn try_from(input: LatticeInput) -> Result<Self> {
        let d = input.basis.len();
        if d == 0 || input.basis.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension(format!("lattice basis must be a square d×d array, got {d} rows")));
        }
        let basis = DMatrix::from_fn(d, d, |i, j| input.basis[j][i]);
        build_lattice(&basis)
    }
}

impl From<Lattice> for LatticeInput {
    fn from(l: Lattice) -> Self {
        let d = l.dim();
        LatticeInput {
            basis: (0..d).map(|j| (0..d).map(|i| l.basis[(i, j)]).collect()).collect(),
        }
    }
}

/// Builds the lattice generated by the columns of `basis`.
pub fn build_lattice(basis: &DMatrix<f64>) -> Result<Lattice> {
    let d = basis.nrows();
    if d == 0 || basis.ncols() != d {
        return Err(Error::Dimension(format!("lattice basis must be square, got {}x{}", d, basis.ncols())));
    }
    if basis.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("lattice basis has non-finite entries".into()));
    }
    let det = basis.determinant();
    let scale: f64 = basis.column_iter().map(|c| c.norm()).product();
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return Err(Error::SingularLattice { det });
    }
    let inverse = basis.clone().try_inverse().ok_or(Error::SingularLattice { det })?;
    Ok(Lattice {
        basis: basis.clone(),
        inverse,
        cell_volume: det.abs(),
    })
}

impl Lattice {
    pub fn unit(d: usize) -> Self {
        build_lattice(&DMatrix::identity(d, d)).expect("identity basis is regular")
    }

    pub fn diagonal(periods: &[f64]) -> Result<Self> {
        build_lattice(&DMatrix::from_diagonal(&DVector::from_column_slice(periods)))
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Inverse of the basis matrix: τ = A⁻¹x.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.basis[(i, j)] == 0.0))
    }

    /// Periods along the coordinate axes; only meaningful for diagonal lattices.
    pub fn axis_periods(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.basis[(j, j)].abs()).collect()
    }

    /// Largest distance between two points of the closed cell.
    pub fn cell_diameter(&self) -> f64 {
        // The farthest pair of points are opposite corners: differences τ - τ' ∈ {±1}^d.
        let d = self.dim();
        (0..(1usize << d))
            .map(|mask| {
                let s = DVector::from_fn(d, |j, _| if mask >> j & 1 == 1 { 1.0 } else { -1.0 });
                (&self.basis * s).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest component of any cell point, used to size box margins.
    pub fn max_extent(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.basis[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Cell coordinates τ = A⁻¹x (not reduced).
    pub fn cell_coords(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.inverse[(i, j)] * x[j]).sum()).collect()
    }

    /// Cell coordinates of `x` reduced modulo Γ into [-1/2, 1/2).
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        self.cell_coords(x).into_iter().map(reduce_unit).collect()
    }

    pub fn point(&self, tau: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.basis[(i, j)] * tau[j]).sum()).collect()
    }
}

/// Reduces a real number into [-1/2, 1/2).
pub fn reduce_unit(t: f64) -> f64 {
    let r = t - (t + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes() {
        assert_eq!(Lattice::unit(1).cell_volume(), 1.0);
        let l = Lattice::diagonal(&[2.0, 3.0]).unwrap();
        assert!((l.cell_volume() - 6.0).abs() < 1e-14);
        assert!(l.is_diagonal());
    }

    #[test]
    fn singular_basis_is_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = build_lattice(&b).unwrap_err();
        assert!(err.to_string().contains("singular lattice basis"));
    }

    #[test]
    fn reduction_lands_in_centered_cell() {
        for &t in &[-3.7, -0.5, 0.0, 0.49, 0.5, 1.25, 7.0] {
            let r = reduce_unit(t);
            assert!((-0.5..0.5).contains(&r), "{t} -> {r}");
            assert!(((t - r) - (t - r).round()).abs() < 1e-12);
        }
    }

    #[test]
    fn oblique_lattice_round_trip() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let l = build_lattice(&b).unwrap();
        let x = [0.3, -0.7];
        let tau = l.cell_coords(&x);
        let back = l.point(&tau);
        assert!((back[0] - x[0]).abs() < 1e-14 && (back[1] - x[1]).abs() < 1e-14);
        assert!(!l.is_diagonal());
    }

    #[test]
    fn json_rows_are_basis_vectors() {
        let l: Lattice = serde_json::from_str(r#"{"basis": [[1.0, 0.0], [0.5, 2.0]]}"#).unwrap();
        assert_eq!(l.basis()[(0, 1)], 0.5);
        assert_eq!(l.basis()[(1, 1)], 2.0);
        assert!((l.cell_volume() - 2.0).abs() < 1e-14);
    }
}
