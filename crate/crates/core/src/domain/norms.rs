use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::assembly::SobolevGrams;
use crate::error::{Error, Result};
use crate::linalg::csr_matvec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    H1,
    H2,
    Hminus1,
}

/// Relative size of boundary values tolerated by the constrained norms.
const BOUNDARY_TOL: f64 = 1e-12;

fn quad_form(a: &nalgebra_sparse::CsrMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&csr_matvec(a, x)).max(0.0)
}

/// Discrete Sobolev norm of an all-node field.
///
/// L² and H¹ use the full lumped mass and Laplacian. H² is the constrained Gram and
/// requires zero boundary values. H⁻¹ is the dual norm of the functional M·f with
/// respect to the unit-coefficient Dirichlet Laplacian.
pub fn sobolev_norm(field: &DVector<f64>, grams: &SobolevGrams, which: NormKind) -> Result<f64> {
    if field.len() != grams.n_dofs() {
        return Err(Error::Dimension(format!("field has {} entries, grid has {} dofs", field.len(), grams.n_dofs())));
    }
    match which {
        NormKind::L2 => Ok(l2_norm(field, &grams.mass_full)),
        NormKind::H1 => Ok(quad_form(&grams.gram_h1_full, field).sqrt()),
        NormKind::H2 => {
            let scale = field.amax();
            let interior = grams.restrict(field);
            let boundary_max = (field - grams.embed(&interior)).amax();
            if boundary_max > BOUNDARY_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput("H2 norm is defined on fields with zero boundary values".into()));
            }
            Ok(quad_form(grams.gram_h2()?, &interior).sqrt())
        }
        NormKind::Hminus1 => {
            let interior = grams.restrict(field);
            let r = interior.component_mul(&DVector::from_column_slice(&grams.mass));
            hminus1_functional(&r, grams)
        }
    }
}

/// ‖r‖_{H⁻¹} = sqrt(rᵀ L⁻¹ r) for a functional on interior dofs.
pub fn hminus1_functional(r: &DVector<f64>, grams: &SobolevGrams) -> Result<f64> {
    if r.len() != grams.n_interior_dofs() {
        return Err(Error::Dimension("functional must live on interior dofs".into()));
    }
    if r.amax() == 0.0 {
        return Ok(0.0);
    }
    let x = grams.laplacian_solver()?.solve(r)?;
    Ok(r.dot(&x).max(0.0).sqrt())
}

/// Lumped-mass L² norm.
pub fn l2_norm(field: &DVector<f64>, mass: &[f64]) -> f64 {
    field.iter().zip(mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// Norm of an interior-dof vector in a constrained Gram (H¹₀ or H²∩H¹₀ flavour).
pub fn constrained_norm(interior: &DVector<f64>, grams: &SobolevGrams, which: NormKind) -> Result<f64> {
    match which {
        NormKind::L2 => Ok(l2_norm(interior, &grams.mass)),
        NormKind::H1 => Ok(quad_form(&grams.gram_h1, interior).sqrt()),
        NormKind::H2 => Ok(quad_form(grams.gram_h2()?, interior).sqrt()),
        NormKind::Hminus1 => {
            let r = interior.component_mul(&DVector::from_column_slice(&grams.mass));
            hminus1_functional(&r, grams)
        }
    }
}
