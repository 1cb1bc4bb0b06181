//! Randomized and spectral structural checks: the multiplier-smoothing bound,
//! discrete contraction and coercivity, the A⁰ second-derivative bound,
//! H² regularity of (A⁰_D)⁻¹ and Voigt–Reuss bracketing of random media.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cell::{effective_matrix, solve_corrector};
use crate::domain::assembly::{assemble_effective, DiscreteOperator, SobolevGrams};
use crate::domain::grid::DomainGrid;
use crate::domain::norms::l2_norm;
use crate::domain::steklov::steklov_smooth;
use crate::error::{Error, Result};
use crate::harness::opnorm::{operator_norm, Gram, LinearMap, OpNormOptions};
use crate::linalg::{csr_from_triplets, csr_matvec, symmetric_eigenvalues, C64};
use crate::periodic::{CoefficientField, Interpolation, Lattice, Medium, SymbolFamily};

/// Relative slack of the multiplier-smoothing bound.
pub const MULTIPLIER_SLACK: f64 = 1e-6;
/// Relative slack of the discrete contraction.
pub const CONTRACTION_SLACK: f64 = 1e-10;

fn spectral_norm_real(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 || a.ncols() == 1 {
        return a.norm();
    }
    a.singular_values().max()
}

/// |Ω|^{-1/2}‖f‖_{L₂(Ω)} by midpoint quadrature in cell coordinates
/// (`samples` points per axis).
pub fn cell_rms(f: &dyn Fn(&[f64]) -> DMatrix<f64>, dim: usize, samples: usize) -> f64 {
    let total = samples.pow(dim as u32);
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        let tau: Vec<f64> = (0..dim)
            .map(|_| {
                let i = rem % samples;
                rem /= samples;
                -0.5 + (i as f64 + 0.5) / samples as f64
            })
            .collect();
        acc += spectral_norm_real(&f(&tau)).powi(2);
    }
    (acc / total as f64).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub epsilon: f64,
    pub bound: f64,
    pub max_ratio: f64,
    pub trials: usize,
    pub passed: bool,
}

/// Max over random unit fields u on a box of ‖f^ε S_ε u‖/‖u‖ against `bound`.
///
/// `f` maps cell coordinates to an (r × c) matrix acting on c-component fields.
/// The fields vanish within one period of the box edge so that S_ε u is exact.
pub fn multiplier_smoothing_bound_check(
    f: &dyn Fn(&[f64]) -> DMatrix<f64>,
    bound: f64,
    lattice: &Lattice,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<MultiplierReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0,1], got {epsilon}")));
    }
    let d = lattice.dim();
    let zero = vec![0.0; d];
    let nc = f(&zero).ncols();
    let grid = DomainGrid::for_epsilon(&vec![1.0; d], lattice, epsilon, 32)?;
    let extent = lattice.max_extent();
    let box_grid = grid.box_grid(2.0 * epsilon * extent)?;
    let periods = lattice.axis_periods();
    let hi: Vec<f64> = (0..d).map(|a| box_grid.cells[a] as f64 * box_grid.h[a] - box_grid.actual_margin()[a]).collect();
    let n = box_grid.node_count();
    let weights: Vec<f64> = (0..n).flat_map(|i| std::iter::repeat_n(box_grid.node_weight(i), nc)).collect();
    let support: Vec<bool> = (0..n)
        .map(|i| {
            let x = box_grid.node_coords(i);
            (0..d).all(|a| {
                let lo = -box_grid.actual_margin()[a] + epsilon * periods[a];
                x[a] >= lo && x[a] <= hi[a] - epsilon * periods[a]
            })
        })
        .collect();
    let multipliers: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let x: Vec<f64> = box_grid.node_coords(i).iter().map(|v| v / epsilon).collect();
            f(&lattice.reduce(&x))
        })
        .collect();
    let rows = multipliers[0].nrows();
    let out_weights: Vec<f64> = (0..n).flat_map(|i| std::iter::repeat_n(box_grid.node_weight(i), rows)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let mut u = DVector::from_fn(n * nc, |k, _| if support[k / nc] { StandardNormal.sample(&mut rng) } else { 0.0 });
        let norm = l2_norm(&u, &weights);
        if norm == 0.0 {
            continue;
        }
        u /= norm;
        let s = steklov_smooth(&u, &box_grid, nc, lattice, epsilon)?;
        let mut v = DVector::zeros(n * rows);
        for i in 0..n {
            let fi = &multipliers[i] * s.rows(i * nc, nc);
            v.rows_mut(i * rows, rows).copy_from(&fi);
        }
        max_ratio = max_ratio.max(l2_norm(&v, &out_weights));
    }
    Ok(MultiplierReport {
        epsilon,
        bound,
        max_ratio,
        trials,
        passed: max_ratio <= bound * (1.0 + MULTIPLIER_SLACK),
    })
}

/// Max over random interior f of ‖A_{D,ε}⁻¹(A_ε f)‖/‖f‖ in the lumped L² norm.
pub fn contraction_check(op: &DiscreteOperator, trials: usize, seed: u64) -> Result<f64> {
    let grams = &op.grams;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let f = DVector::from_fn(op.n(), |_, _| StandardNormal.sample(&mut rng));
        let back = op.solve(&op.apply_weak(&grams.embed(&f)))?;
        worst = worst.max(l2_norm(&back, &grams.mass) / l2_norm(&f, &grams.mass));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// Smallest eigenvalue μ of K x = μ G_{H¹} x.
    pub min_ratio: f64,
    /// c_*^{-2}.
    pub required: f64,
    pub passed: bool,
}

/// Checks ⟨Kx, x⟩ ≥ c_*^{-2}‖x‖²_{H¹} on the constrained space.
pub fn coercivity_check(op: &DiscreteOperator, c_star: f64) -> Result<CoercivityReport> {
    let n = op.n();
    let identity = csr_from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>());
    let source = Gram::Sparse(&op.stiffness, op.solver());
    let target = Gram::Sparse(&op.grams.gram_h1, op.grams.h1_solver()?);
    let r = operator_norm(&identity, &source, &target, &OpNormOptions::default())?;
    let min_ratio = 1.0 / (r.sigma_max * r.sigma_max);
    let required = 1.0 / (c_star * c_star);
    Ok(CoercivityReport {
        min_ratio,
        required,
        passed: min_ratio >= required * (1.0 - 1e-9),
    })
}

/// x ↦ K⁻¹Mx: the discrete (A⁰_D)⁻¹ acting on L² data.
struct InverseMap<'a> {
    op: &'a DiscreteOperator,
}

impl LinearMap for InverseMap<'_> {
    fn nrows(&self) -> usize {
        self.op.n()
    }
    fn ncols(&self) -> usize {
        self.op.n()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.op.solve(&x.component_mul(&DVector::from_column_slice(self.op.mass())))
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.op.solve(y)?.component_mul(&DVector::from_column_slice(self.op.mass())))
    }
}

/// ‖(A⁰_D)⁻¹‖ from L² to the discrete H² on one grid.
pub fn inverse_h2_norm(op: &DiscreteOperator) -> Result<f64> {
    let grams = &op.grams;
    let source = Gram::Diagonal(&grams.mass);
    let target = Gram::Sparse(grams.gram_h2()?, grams.h2_solver()?);
    Ok(operator_norm(&InverseMap { op }, &source, &target, &OpNormOptions::default())?.sigma_max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub cells: Vec<Vec<usize>>,
    pub norms: Vec<f64>,
    /// Largest norm over the grids (the recorded ĉ).
    pub c_hat: f64,
    /// max/min over the grids.
    pub spread: f64,
}

/// ‖(A⁰_D)⁻¹‖_{L²→H²} on the grid and its successive refinements by 2.
pub fn h2_regularity_probe(g0_real: &DMatrix<f64>, b_real: &[DMatrix<f64>], grid: &DomainGrid, levels: usize) -> Result<RegularityProbe> {
    let nc = b_real.first().map(|b| b.nrows()).ok_or_else(|| Error::InvalidInput("empty symbol".into()))?;
    let mut cells = Vec::new();
    let mut norms = Vec::new();
    let mut g = grid.clone();
    for level in 0..levels {
        if level > 0 {
            g = g.refine(2)?;
        }
        let grams = SobolevGrams::new(&g, nc);
        let op = assemble_effective(g0_real, b_real, &grams)?;
        cells.push(g.cells().to_vec());
        norms.push(inverse_h2_norm(&op)?);
    }
    let c_hat = norms.iter().cloned().fold(0.0, f64::max);
    let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RegularityProbe {
        cells,
        norms,
        c_hat,
        spread: c_hat / lo,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecondDerivativeReport {
    pub max_ratio: f64,
    /// α₁·d·‖g‖_{L∞}·(1 + h).
    pub bound: f64,
    pub passed: bool,
}

/// ‖A⁰h‖_{L²} against α₁·d·‖g‖·‖D²h‖_{L²} for random zero-boundary h.
///
/// Half the trials are white noise, half are smooth random sine sums.
pub fn second_derivative_check(op: &DiscreteOperator, alpha1: f64, norm_g: f64, trials: usize, seed: u64) -> Result<SecondDerivativeReport> {
    let grams = &op.grams;
    let grid = &grams.grid;
    let d = grid.dim();
    let nc = grams.nc;
    let h2 = grams.gram_h2()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let h = if trial % 2 == 0 {
            DVector::from_fn(op.n(), |_, _| StandardNormal.sample(&mut rng))
        } else {
            let modes: Vec<(Vec<f64>, f64)> = (0..4)
                .map(|_| ((0..d).map(|_| rng.random_range(1..6) as f64).collect(), StandardNormal.sample(&mut rng)))
                .collect();
            let lengths = grid.lengths().to_vec();
            grams.restrict(&grid.sample(nc, |x| {
                let s: f64 = modes
                    .iter()
                    .map(|(k, c)| c * x.iter().zip(k).zip(&lengths).map(|((xj, kj), l)| (kj * std::f64::consts::PI * xj / l).sin()).product::<f64>())
                    .sum();
                vec![s; nc]
            }))
        };
        let ah = csr_matvec(&op.stiffness, &h).component_div(&DVector::from_column_slice(&grams.mass));
        let d2 = h.dot(&csr_matvec(h2, &h)) - h.dot(&csr_matvec(&grams.gram_h1, &h));
        if d2 <= 0.0 {
            continue;
        }
        worst = worst.max(l2_norm(&ah, &grams.mass) / d2.sqrt());
    }
    let hmax = grid.h().iter().cloned().fold(0.0, f64::max);
    let bound = alpha1 * d as f64 * norm_g * (1.0 + hmax);
    Ok(SecondDerivativeReport {
        max_ratio: worst,
        bound,
        passed: worst <= bound,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketSample {
    pub dim: usize,
    /// Smallest eigenvalue of g⁰ − reuss.
    pub lower_slack: f64,
    /// Smallest eigenvalue of voigt − g⁰.
    pub upper_slack: f64,
    pub passed: bool,
}

/// Random piecewise-constant scalar media a(y)·1 with a in [lo, hi]; alternates
/// 1D (64 samples, 512-node cell grid) and 2D (8×8 samples, 32×32 cell grid).
pub fn random_bracketing(trials: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<BracketSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let d = 1 + trial % 2;
        let (samples, resolution) = if d == 1 { (vec![64], vec![512]) } else { (vec![8, 8], vec![32, 32]) };
        let count: usize = samples.iter().product();
        let values: Vec<DMatrix<C64>> = (0..count)
            .map(|_| DMatrix::identity(d, d) * C64::new(rng.random_range(lo..=hi), 0.0))
            .collect();
        let field = CoefficientField::from_samples(samples, values, Interpolation::PiecewiseConstant)?;
        let medium = Medium::new(Lattice::unit(d), field, SymbolFamily::gradient(d))?;
        let corrector = solve_corrector(&medium, &resolution)?;
        let eff = effective_matrix(&medium, &corrector)?;
        let min_eig = |a: DMatrix<f64>| symmetric_eigenvalues(&(&a + a.transpose()).scale(0.5)).into_iter().fold(f64::INFINITY, f64::min);
        let lower_slack = min_eig(&eff.g0_real - &eff.reuss_real);
        let upper_slack = min_eig(&eff.voigt_real - &eff.g0_real);
        let scale = eff.voigt_real.amax();
        out.push(BracketSample {
            dim: d,
            lower_slack,
            upper_slack,
            passed: lower_slack >= -1e-9 * scale && upper_slack >= -1e-9 * scale,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::assembly::assemble_heterogeneous;
    use crate::periodic::lattice::reduce_unit;

    fn two_phase(tau: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, if reduce_unit(tau[0]) < 0.0 { 1.0 } else { 4.0 })
    }

    #[test]
    fn cell_rms_of_two_phase_and_constants() {
        assert!((cell_rms(&two_phase, 1, 1024) - 8.5f64.sqrt()).abs() < 1e-12);
        assert!((cell_rms(&|_: &[f64]| DMatrix::identity(2, 2), 2, 8) - 1.0).abs() < 1e-14);
        // A rank-one matrix field: the pointwise operator norm is used.
        let r = cell_rms(&|_: &[f64]| DMatrix::from_element(2, 2, 1.0), 1, 4);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multiplier_bounds_hold_for_unit_and_two_phase() {
        let lattice = Lattice::unit(1);
        let one = |_: &[f64]| DMatrix::from_element(1, 1, 1.0);
        let r = multiplier_smoothing_bound_check(&one, 1.0, &lattice, 0.125, 20, 7).unwrap();
        assert!(r.passed && r.max_ratio > 0.0 && r.max_ratio <= 1.0);
        let r = multiplier_smoothing_bound_check(&two_phase, 8.5f64.sqrt(), &lattice, 0.25, 20, 7).unwrap();
        assert!(r.passed, "{r:?}");
        // A bound below the observed ratio is reported as a failure.
        let r = multiplier_smoothing_bound_check(&two_phase, 1e-3, &lattice, 0.25, 5, 7).unwrap();
        assert!(!r.passed);
        assert!(multiplier_smoothing_bound_check(&one, 1.0, &lattice, 2.0, 5, 7).is_err());
    }

    #[test]
    fn contraction_and_coercivity_on_two_phase() {
        let field = CoefficientField::from_samples(
            vec![2],
            vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0)), DMatrix::from_element(1, 1, C64::new(4.0, 0.0))],
            Interpolation::PiecewiseConstant,
        )
        .unwrap();
        let medium = Medium::new(Lattice::unit(1), field, SymbolFamily::gradient(1)).unwrap();
        let grid = DomainGrid::new(&[1.0], &[128]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let het = assemble_heterogeneous(&medium, 0.125, &grams).unwrap();
        let c = contraction_check(&het, 5, 1).unwrap();
        assert!((c - 1.0).abs() < 1e-10);
        // c_*² = ‖g⁻¹‖(1 + diam²)/α₀ = 2 for g ≥ 1 on the unit interval.
        let r = coercivity_check(&het, 2f64.sqrt()).unwrap();
        assert!(r.passed);
        // Oracle: the smallest Rayleigh quotient is at most that of sin(πx).
        let s = grams.restrict(&grid.sample(1, |x| vec![(std::f64::consts::PI * x[0]).sin()]));
        let q = s.dot(&csr_matvec(&het.stiffness, &s)) / s.dot(&csr_matvec(&grams.gram_h1, &s));
        assert!(r.min_ratio <= q * (1.0 + 1e-8));
        assert!(r.min_ratio > 0.5);
    }

    #[test]
    fn second_derivative_bound_and_regularity() {
        let grid = DomainGrid::new(&[1.0], &[64]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let b = [DMatrix::from_element(1, 1, 1.0)];
        let op = assemble_effective(&DMatrix::from_element(1, 1, 1.6), &b, &grams).unwrap();
        let r = second_derivative_check(&op, 1.0, 4.0, 10, 3).unwrap();
        assert!(r.passed, "{r:?}");
        // In 1D the lumped operator is exactly g⁰ times the centered second difference.
        assert!(r.max_ratio <= 1.6 * (1.0 + 1e-12));
        let p = h2_regularity_probe(&DMatrix::from_element(1, 1, 1.6), &b, &DomainGrid::new(&[1.0], &[32]).unwrap(), 3).unwrap();
        assert_eq!(p.norms.len(), 3);
        // (A⁰)⁻¹ sin(πx) = sin(πx)/(1.6π²): the norm is at least the H² ratio of that mode.
        let pi2 = std::f64::consts::PI.powi(2);
        let mode = (1.0 + pi2 + pi2 * pi2).sqrt() / (1.6 * pi2);
        assert!(p.norms.iter().all(|n| *n >= 0.95 * mode));
        assert!(p.spread < 1.2, "{p:?}");
    }

    #[test]
    fn random_media_are_bracketed() {
        let s = random_bracketing(4, 0.5, 5.0, 11).unwrap();
        assert!(s.iter().all(|b| b.passed));
        assert_eq!(s.iter().filter(|b| b.dim == 2).count(), 2);
    }
}
