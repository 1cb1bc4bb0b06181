//! Steklov smoothing (S_ε u)(x) = |Ω|⁻¹ ∫_Ω u(x - εz) dz on a box grid.
//!
//! For an axis-aligned cell the average factorizes into 1D window means of
//! half-width ε·a_j/2. Each window mean is computed exactly for the piecewise
//! linear interpolant through its cumulative integral; the field is zero outside
//! the box.

use nalgebra::DVector;

use crate::domain::grid::BoxGrid;
use crate::error::{Error, Result};
use crate::periodic::Lattice;

/// Cumulative integral of the piecewise-linear interpolant of `u` (spacing h, origin x0).
pub struct Cumulative<'a> {
    u: &'a [f64],
    c: Vec<f64>,
    x0: f64,
    h: f64,
}

impl<'a> Cumulative<'a> {
    pub fn new(u: &'a [f64], x0: f64, h: f64) -> Self {
        let mut c = Vec::with_capacity(u.len());
        c.push(0.0);
        for k in 1..u.len() {
            c.push(c[k - 1] + 0.5 * h * (u[k - 1] + u[k]));
        }
        Cumulative { u, c, x0, h }
    }

    /// ∫_{x0}^{y} Iu, with Iu = 0 outside the grid.
    pub fn at(&self, y: f64) -> f64 {
        let n = self.u.len();
        let s = (y - self.x0) / self.h;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= (n - 1) as f64 {
            return self.c[n - 1];
        }
        let k = (s.floor() as usize).min(n - 2);
        let t = s - k as f64;
        self.c[k] + self.h * (t * self.u[k] + 0.5 * t * t * (self.u[k + 1] - self.u[k]))
    }

    /// Window mean over [y - w, y + w].
    pub fn mean(&self, y: f64, w: f64) -> f64 {
        (self.at(y + w) - self.at(y - w)) / (2.0 * w)
    }
}

/// Half-widths of the smoothing window per axis.
pub fn half_widths(lattice: &Lattice, epsilon: f64) -> Result<Vec<f64>> {
    if !lattice.is_diagonal() {
        return Err(Error::InvalidInput("Steklov smoothing on grids needs an axis-aligned lattice".into()));
    }
    Ok(lattice.axis_periods().iter().map(|a| 0.5 * epsilon * a).collect())
}

/// Applies S_ε to a box field with `nc` components per node.
pub fn steklov_smooth(field: &DVector<f64>, box_grid: &BoxGrid, nc: usize, lattice: &Lattice, epsilon: f64) -> Result<DVector<f64>> {
    let w = half_widths(lattice, epsilon)?;
    let margins = box_grid.actual_margin();
    for (a, (wa, ma)) in w.iter().zip(&margins).enumerate() {
        if *wa >= *ma {
            return Err(Error::Margin(format!(
                "axis {a}: smoothing half-width {wa} reaches past the box margin {ma}"
            )));
        }
    }
    if field.len() != box_grid.node_count() * nc {
        return Err(Error::Dimension("field does not match the box grid".into()));
    }
    let shape = box_grid.nodes_per_axis();
    let mut data = field.clone();
    let mut stride = nc;
    for (a, &len) in shape.iter().enumerate() {
        let h = box_grid.h[a];
        let x0 = -(box_grid.pad[a] as f64) * h;
        let mut out = DVector::zeros(data.len());
        let mut line = vec![0.0; len];
        let block = stride * len;
        for base in 0..data.len() {
            // Enumerate line starts: offset within the stride, and outer block.
            if (base % block) >= stride {
                continue;
            }
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * stride];
            }
            let cum = Cumulative::new(&line, x0, h);
            for k in 0..len {
                out[base + k * stride] = cum.mean(x0 + k as f64 * h, w[a]);
            }
        }
        data = out;
        stride *= len;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::grid::DomainGrid;

    fn setup(cells: usize) -> (DomainGrid, BoxGrid) {
        let grid = DomainGrid::new(&[1.0], &[cells]).unwrap();
        let b = grid.box_grid(0.3).unwrap();
        (grid, b)
    }

    fn sample(b: &BoxGrid, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_fn(b.node_count(), |i, _| f(b.node_coords(i)[0]))
    }

    #[test]
    fn constants_and_linear_functions_are_fixed() {
        let (_, b) = setup(100);
        let l = Lattice::unit(1);
        for f in [|_: f64| 3.0, |x: f64| x] {
            let u = sample(&b, f);
            let s = steklov_smooth(&u, &b, 1, &l, 0.1).unwrap();
            for i in 0..b.node_count() {
                let x = b.node_coords(i)[0];
                if x > -0.2 && x < 1.2 {
                    assert!((s[i] - f(x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn square_gains_variance_term() {
        let eps = 0.1;
        let mut prev = f64::INFINITY;
        for cells in [50, 100, 200] {
            let (_, b) = setup(cells);
            let u = sample(&b, |x| x * x);
            let s = steklov_smooth(&u, &b, 1, &Lattice::unit(1), eps).unwrap();
            let mut err: f64 = 0.0;
            for i in 0..b.node_count() {
                let x = b.node_coords(i)[0];
                if (0.0..=1.0).contains(&x) {
                    err = err.max((s[i] - (x * x + eps * eps / 12.0)).abs());
                }
            }
            assert!(err < prev / 3.5 || err < 1e-13);
            prev = err;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn commutes_with_period_shifts() {
        let (_, b) = setup(160);
        let eps = 0.1;
        // 16 cells per ε-period.
        let u = sample(&b, |x| (7.3 * x).sin() * (-(x - 0.5).powi(2)).exp());
        let s = steklov_smooth(&u, &b, 1, &Lattice::unit(1), eps).unwrap();
        let shift = 16;
        let shifted: DVector<f64> = DVector::from_fn(u.len(), |i, _| if i >= shift { u[i - shift] } else { 0.0 });
        let s_shifted = steklov_smooth(&shifted, &b, 1, &Lattice::unit(1), eps).unwrap();
        for i in 60..(u.len() - 60) {
            assert!((s_shifted[i] - s[i - shift]).abs() < 1e-13);
        }
    }

    #[test]
    fn window_beyond_margin_is_rejected() {
        let (_, b) = setup(100);
        let u = DVector::zeros(b.node_count());
        assert!(steklov_smooth(&u, &b, 1, &Lattice::unit(1), 0.7).is_err());
    }

    #[test]
    fn two_dimensional_tensor_average() {
        let grid = DomainGrid::new(&[1.0, 1.0], &[40, 40]).unwrap();
        let b = grid.box_grid(0.2).unwrap();
        let l = Lattice::diagonal(&[1.0, 2.0]).unwrap();
        let eps = 0.1;
        let u = DVector::from_fn(b.node_count(), |i, _| {
            let x = b.node_coords(i);
            x[0] * x[0] + x[0] * x[1]
        });
        let s = steklov_smooth(&u, &b, 1, &l, eps).unwrap();
        for i in 0..b.node_count() {
            let x = b.node_coords(i);
            if (0.0..=1.0).contains(&x[0]) && (0.0..=1.0).contains(&x[1]) {
                // Only the x² term gains ε²a₁²/12; the cross term averages exactly.
                let exact = x[0] * x[0] + eps * eps / 12.0 + x[0] * x[1];
                assert!((s[i] - exact).abs() < 2e-4, "{} vs {exact}", s[i]);
            }
        }
    }
}
