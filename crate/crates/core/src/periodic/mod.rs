//! Lattice, periodic coefficients, the symbol b(D), and ε-scaling.

pub mod coefficient;
pub mod lattice;
pub mod symbol;

use nalgebra::DMatrix;

pub use coefficient::{sample_coefficient, CoefficientField, CoefficientSpec, Interpolation, MatrixInput};
pub use lattice::{build_lattice, Lattice};
pub use symbol::{symbol_bounds, SymbolFamily, SymbolSpec};

use crate::domain::grid::DomainGrid;
use crate::error::{Error, Result};
use crate::linalg::{realify, C64};

/// Hard lower bound on grid points per ε-period. Sweeps use 32 by default.
pub const MIN_POINTS_PER_PERIOD: usize = 4;

/// The periodic medium: lattice, coefficient and symbol, validated for consistency.
///
/// Complex data are realified once here; `mr`/`nr` are the real sizes used by
/// every discrete operator.
#[derive(Clone, Debug)]
pub struct Medium {
    pub lattice: Lattice,
    pub field: CoefficientField,
    pub symbol: SymbolFamily,
    complex: bool,
    b_real: Vec<DMatrix<f64>>,
}

impl Medium {
    pub fn new(lattice: Lattice, field: CoefficientField, symbol: SymbolFamily) -> Result<Self> {
        let d = lattice.dim();
        if field.dim() != d || symbol.dim() != d {
            return Err(Error::Dimension(format!(
                "lattice dimension {d}, coefficient dimension {}, symbol dimension {}",
                field.dim(),
                symbol.dim()
            )));
        }
        if field.m() != symbol.m() {
            return Err(Error::Dimension(format!("coefficient is {0}x{0} but the symbol has m = {1}", field.m(), symbol.m())));
        }
        let complex = field.is_complex() || symbol.is_complex();
        let b_real = symbol.real_matrices(complex);
        Ok(Medium {
            lattice,
            field,
            symbol,
            complex,
            b_real,
        })
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }
    pub fn is_complex(&self) -> bool {
        self.complex
    }
    /// Real row size of b_j (m or 2m).
    pub fn mr(&self) -> usize {
        self.symbol.m() * if self.complex { 2 } else { 1 }
    }
    /// Real unknowns per node (n or 2n).
    pub fn nr(&self) -> usize {
        self.symbol.n() * if self.complex { 2 } else { 1 }
    }
    pub fn b_real(&self) -> &[DMatrix<f64>] {
        &self.b_real
    }

    pub fn lift(&self, a: &DMatrix<C64>) -> DMatrix<f64> {
        if self.complex {
            realify(a)
        } else {
            a.map(|z| z.re)
        }
    }

    /// Real form of g at cell coordinates τ.
    pub fn g_real_cell(&self, tau: &[f64]) -> DMatrix<f64> {
        self.lift(&self.field.evaluate(tau))
    }

    /// Real form of g^ε(x) = g(x/ε).
    pub fn g_real_scaled(&self, x: &[f64], epsilon: f64) -> DMatrix<f64> {
        let y: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
        self.g_real_cell(&self.lattice.reduce(&y))
    }
}

/// Grid points per ε-period along each axis of `grid`.
pub fn points_per_period(lattice: &Lattice, epsilon: f64, grid: &DomainGrid) -> Vec<f64> {
    let d = lattice.dim();
    let inv = lattice.basis().clone().try_inverse().expect("lattice basis is regular");
    (0..d)
        .map(|j| {
            // Fastest rate of change of any cell coordinate along axis j.
            let rate = (0..d).map(|i| inv[(i, j)].abs()).fold(0.0, f64::max);
            epsilon / (grid.h()[j] * rate)
        })
        .collect()
}

fn check_resolution(lattice: &Lattice, epsilon: f64, grid: &DomainGrid) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if grid.dim() != lattice.dim() {
        return Err(Error::Dimension("grid and lattice dimensions differ".into()));
    }
    for (axis, ppp) in points_per_period(lattice, epsilon, grid).into_iter().enumerate() {
        if ppp < MIN_POINTS_PER_PERIOD as f64 - 1e-9 {
            return Err(Error::UnderResolved {
                axis,
                points_per_period: ppp,
                minimum: MIN_POINTS_PER_PERIOD,
            });
        }
    }
    Ok(())
}

/// Values of g^ε at the nodes of `grid`: g evaluated at ε⁻¹x reduced to Ω.
pub fn scale_to_domain(field: &CoefficientField, lattice: &Lattice, epsilon: f64, grid: &DomainGrid) -> Result<Vec<DMatrix<C64>>> {
    check_resolution(lattice, epsilon, grid)?;
    Ok((0..grid.node_count())
        .map(|idx| {
            let y: Vec<f64> = grid.node_coords(idx).iter().map(|v| v / epsilon).collect();
            field.evaluate(&lattice.reduce(&y))
        })
        .collect())
}

/// Same check as [`scale_to_domain`], exposed for assembly.
pub fn ensure_resolved(lattice: &Lattice, epsilon: f64, grid: &DomainGrid) -> Result<()> {
    check_resolution(lattice, epsilon, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_phase() -> CoefficientField {
        let spec = CoefficientSpec::TwoPhase {
            values: [MatrixInput::Scalar(1.0), MatrixInput::Scalar(4.0)],
            axis: 0,
        };
        sample_coefficient(&spec, &[64], 1).unwrap()
    }

    #[test]
    fn two_phase_scaled_pointwise() {
        let grid = DomainGrid::new(&[1.0], &[160]).unwrap();
        let vals = scale_to_domain(&two_phase(), &Lattice::unit(1), 0.25, &grid).unwrap();
        // Node 16 sits at x = 0.1, i.e. τ = 0.4.
        assert!((grid.node_coords(16)[0] - 0.1).abs() < 1e-15);
        assert_eq!(vals[16][(0, 0)].re, 4.0);
        // x = 0.15 → τ = 0.6 → -0.4.
        assert_eq!(vals[24][(0, 0)].re, 1.0);
    }

    #[test]
    fn unit_scaling_copies_samples() {
        // Nodes of a 64-cell grid on (-1/2, 1/2) shifted by half a cell hit the sample centers.
        let field = two_phase();
        let grid = DomainGrid::new(&[1.0], &[64]).unwrap();
        let vals = scale_to_domain(&field, &Lattice::unit(1), 1.0, &grid).unwrap();
        for (idx, v) in vals.iter().enumerate().take(64) {
            let tau = lattice::reduce_unit(grid.node_coords(idx)[0]);
            assert_eq!(*v, field.evaluate(&[tau]));
        }
    }

    #[test]
    fn under_resolution_is_an_error() {
        let grid = DomainGrid::new(&[1.0], &[8]).unwrap();
        let err = scale_to_domain(&two_phase(), &Lattice::unit(1), 0.25, &grid).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { .. }));
    }

    #[test]
    fn constant_field_is_constant_on_domain() {
        let spec = CoefficientSpec::Constant { value: MatrixInput::Scalar(2.5) };
        let field = sample_coefficient(&spec, &[4, 4], 1).unwrap();
        let grid = DomainGrid::new(&[1.0, 2.0], &[16, 32]).unwrap();
        let vals = scale_to_domain(&field, &Lattice::unit(2), 0.25, &grid).unwrap();
        assert!(vals.iter().all(|v| v[(0, 0)].re == 2.5));
    }
}
