//! Boundary-layer discrepancy w_ε via the zero-boundary difference
//! z = w_ε − εK(ε)u₀, which solves (∂_t² + A_ε)z = −A_ε εK(ε)u₀ from rest.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::approximation::CorrectorOperator;
use crate::domain::assembly::DiscreteOperator;
use crate::error::{Error, Result};
use crate::evolution::forcing::sample_step;
use crate::evolution::modal::{ModalBasis, ModalLoad, ModalSolution};
use crate::evolution::trajectory::{check_times, ProblemTag, Trajectory};
use crate::linalg::csr_matvec;

/// Default load samples per unit time for the difference system.
pub const DISCREPANCY_SAMPLES_PER_UNIT: usize = 256;

#[derive(Clone, Debug)]
pub struct DiscrepancyResult {
    /// w_ε.
    pub w: Trajectory,
    /// w_ε − εK(ε)u₀.
    pub difference: Trajectory,
    /// εK(ε)u₀ at the output times.
    pub corrector_terms: Vec<DVector<f64>>,
}

/// Applies εK(ε) to each column of an interior-field matrix; returns all-node columns.
fn apply_columns(k: &CorrectorOperator, op: &DiscreteOperator, interior: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    (0..interior.ncols())
        .into_par_iter()
        .map(|j| k.apply(&op.grams.embed(&interior.column(j).into_owned())))
        .collect()
}

/// Solves for w_ε given the homogenized solution `u0` (built on the same grid as `het_op`).
pub fn solve_discrepancy(
    u0: &ModalSolution,
    het_op: &DiscreteOperator,
    het_basis: &ModalBasis,
    k: &CorrectorOperator,
    times: &[f64],
    samples_per_unit: usize,
) -> Result<DiscrepancyResult> {
    check_times(times)?;
    let epsilon = k.epsilon;
    let grams = &het_op.grams;
    if het_basis.len() != het_op.n() || u0.basis.len() != het_op.n() || k.grid().node_count() != grams.grid.node_count() {
        return Err(Error::GridMismatch("u₀, the heterogeneous operator and K(ε) must share one grid".into()));
    }
    let t_end = times.last().copied().unwrap_or(0.0);

    let load = if t_end > 0.0 {
        let dt = sample_step(t_end, samples_per_unit)?;
        let n_samples = (t_end / dt).round() as usize + 1;
        let sample_times: Vec<f64> = (0..n_samples).map(|i| i as f64 * dt).collect();
        let coeffs = u0.modal_states(&sample_times)?;
        let c0 = DMatrix::from_columns(&coeffs.iter().map(|(u, _)| u.clone()).collect::<Vec<_>>());
        let u_samples = &u0.basis.vectors * c0;
        let c = apply_columns(k, het_op, &u_samples)?;
        let mut r = DMatrix::zeros(het_op.n(), n_samples);
        for (j, cj) in c.iter().enumerate() {
            let kc = grams.restrict(&csr_matvec(&het_op.stiffness_full, cj));
            r.set_column(j, &(-kc));
        }
        let modal = het_basis.vectors.tr_mul(&r);
        ModalLoad::Sampled {
            t0: 0.0,
            dt,
            loads: modal.column_iter().map(|c| c.into_owned()).collect(),
        }
    } else {
        ModalLoad::None
    };

    let zero = DVector::zeros(het_op.n());
    let z = ModalSolution::new(het_basis, ProblemTag::DiscrepancyDifference { epsilon }, &zero, &zero, load)?;
    let mut difference = z.trajectory(times)?;
    if het_basis.grams().is_none() {
        return Err(Error::InvalidInput("basis carries no Gram matrices".into()));
    }
    difference.tag = ProblemTag::DiscrepancyDifference { epsilon };

    let states = u0.modal_states(times)?;
    let u_out = DMatrix::from_columns(&states.iter().map(|(u, _)| u.clone()).collect::<Vec<_>>());
    let v_out = DMatrix::from_columns(&states.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>());
    let corrector_terms = if times.is_empty() { Vec::new() } else { apply_columns(k, het_op, &(&u0.basis.vectors * u_out))? };
    let corrector_rates = if times.is_empty() { Vec::new() } else { apply_columns(k, het_op, &(&u0.basis.vectors * v_out))? };

    let w = Trajectory {
        tag: ProblemTag::Discrepancy { epsilon },
        times: times.to_vec(),
        states: difference.states.iter().zip(&corrector_terms).map(|(z, c)| z + c).collect(),
        velocities: difference.velocities.iter().zip(&corrector_rates).map(|(z, c)| z + c).collect(),
    };
    Ok(DiscrepancyResult {
        w,
        difference,
        corrector_terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{effective_matrix, solve_corrector};
    use crate::domain::assembly::{assemble_effective, assemble_heterogeneous, SobolevGrams};
    use crate::domain::extension::ReflectionKind;
    use crate::domain::grid::DomainGrid;
    use crate::evolution::forcing::Forcing;
    use crate::evolution::modal::spectral_decompose;
    use crate::linalg::C64;
    use crate::periodic::{sample_coefficient, CoefficientField, CoefficientSpec, Lattice, MatrixInput, Medium, SymbolFamily};
    use std::f64::consts::PI;

    fn run(medium: &Medium, phi_scale: f64) -> DiscrepancyResult {
        let eps = 0.125;
        let lam = solve_corrector(medium, &[256]).unwrap();
        let eff = effective_matrix(medium, &lam).unwrap();
        let grid = DomainGrid::new(&[1.0], &[128]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let het = assemble_heterogeneous(medium, eps, &grams).unwrap();
        let effop = assemble_effective(&eff.g0_real, medium.b_real(), &grams).unwrap();
        let hb = spectral_decompose(&het).unwrap();
        let eb = spectral_decompose(&effop).unwrap();
        let k = CorrectorOperator::new(medium, &lam, &grid, eps, 0.25, ReflectionKind::C1).unwrap();
        let phi = grid.sample(1, |x| vec![phi_scale * x[0] * (1.0 - x[0]) * (1.0 + x[0])]);
        let psi = grid.sample(1, |x| vec![phi_scale * (PI * x[0]).sin()]);
        let u0 = ModalSolution::from_forcing(&eb, ProblemTag::Effective, &grams.restrict(&phi), &grams.restrict(&psi), &Forcing::None).unwrap();
        solve_discrepancy(&u0, &het, &hb, &k, &[0.0, 0.3, 1.0], DISCREPANCY_SAMPLES_PER_UNIT).unwrap()
    }

    fn two_phase() -> Medium {
        let spec = CoefficientSpec::TwoPhase {
            values: [MatrixInput::Scalar(1.0), MatrixInput::Scalar(4.0)],
            axis: 0,
        };
        Medium::new(Lattice::unit(1), sample_coefficient(&spec, &[256], 1).unwrap(), SymbolFamily::gradient(1)).unwrap()
    }

    #[test]
    fn constant_coefficient_gives_no_discrepancy() {
        let field = CoefficientField::constant(1, DMatrix::from_element(1, 1, C64::new(2.0, 0.0))).unwrap();
        let medium = Medium::new(Lattice::unit(1), field, SymbolFamily::gradient(1)).unwrap();
        let r = run(&medium, 1.0);
        assert!(r.w.states.iter().all(|s| s.amax() < 1e-14));
    }

    #[test]
    fn zero_data_gives_no_discrepancy() {
        let r = run(&two_phase(), 0.0);
        assert!(r.w.states.iter().all(|s| s.amax() == 0.0));
    }

    #[test]
    fn difference_starts_at_zero_and_matches_boundary() {
        let r = run(&two_phase(), 1.0);
        assert_eq!(r.difference.states[0].amax(), 0.0);
        assert!(r.corrector_terms[2].amax() > 0.0);
        // w_ε carries the corrector's boundary values.
        let last = r.w.states[2].len() - 1;
        for i in 0..3 {
            assert_eq!(r.w.states[i][0], r.corrector_terms[i][0]);
            assert_eq!(r.w.states[i][last], r.corrector_terms[i][last]);
        }
        assert!(r.difference.states[2].amax() > 0.0);
    }
}
