//! Explicit leapfrog for systems beyond the modal size cap.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::assembly::DiscreteOperator;
use crate::error::{Error, Result};
use crate::evolution::forcing::Forcing;
use crate::evolution::trajectory::{check_times, ProblemTag, Trajectory};
use crate::linalg::csr_matvec;

/// Fraction of the stability limit 2/√λ_max that a step may use.
pub const CFL_FRACTION: f64 = 0.9;

/// Largest eigenvalue of M⁻¹K by power iteration, inflated by the last relative change.
pub fn max_eigenvalue(op: &DiscreteOperator, seed: u64) -> Result<f64> {
    let n = op.n();
    let m = op.mass();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let mut rho = 0.0;
    for _ in 0..5000 {
        let norm = x.iter().zip(m).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
        x /= norm;
        let kx = csr_matvec(&op.stiffness, &x);
        let next = x.dot(&kx);
        let change = (next - rho).abs() / next;
        rho = next;
        x = DVector::from_fn(n, |i, _| kx[i] / m[i]);
        if change < 1e-8 {
            break;
        }
    }
    // Gershgorin bound on D^{-1/2}KD^{-1/2} caps the estimate from above.
    let mut gersh: f64 = 0.0;
    for (i, row) in op.stiffness.row_iter().enumerate() {
        let s: f64 = row.col_indices().iter().zip(row.values()).map(|(j, v)| v.abs() / (m[i] * m[*j]).sqrt()).sum();
        gersh = gersh.max(s);
    }
    Ok((rho * (1.0 + 1e-3)).min(gersh))
}

pub fn stable_step(op: &DiscreteOperator, seed: u64) -> Result<f64> {
    Ok(CFL_FRACTION * 2.0 / max_eigenvalue(op, seed)?.sqrt())
}

/// Leapfrog trajectory up to max(times) with step `dt` (rounded down to divide the horizon).
/// Outputs between steps use cubic Hermite interpolation of (u, u').
pub fn leapfrog_evolve(
    op: &DiscreteOperator,
    tag: ProblemTag,
    phi: &DVector<f64>,
    psi: &DVector<f64>,
    forcing: &Forcing,
    dt: f64,
    times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    check_times(times)?;
    let limit = stable_step(op, seed)?;
    if !(dt > 0.0) || dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    let grams = &op.grams;
    let t_end = times.last().copied().unwrap_or(0.0);
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let dt = if t_end > 0.0 { t_end / steps as f64 } else { dt };
    let m = op.mass();
    let load = forcing.spatial_load(grams);
    let profile = forcing.profile();
    let accel = |u: &DVector<f64>, t: f64| -> Result<DVector<f64>> {
        let mut r = -csr_matvec(&op.stiffness, u);
        if let (Some(l), Some(p)) = (&load, profile) {
            r.axpy(p.at(t)?, l, 1.0);
        }
        Ok(DVector::from_fn(r.len(), |i, _| r[i] / m[i]))
    };

    let u0 = grams.restrict(phi);
    let v0 = grams.restrict(psi);
    let a0 = accel(&u0, 0.0)?;
    let mut prev = u0.clone();
    let mut cur = &u0 + &v0 * dt + &a0 * (0.5 * dt * dt);
    // Displacements at steps 0..=steps; velocities by central differences.
    let mut us = vec![u0];
    us.push(cur.clone());
    for k in 1..steps {
        let a = accel(&cur, k as f64 * dt)?;
        let next = &cur * 2.0 - &prev + a * (dt * dt);
        prev = cur;
        cur = next;
        us.push(cur.clone());
    }
    let a_end = accel(&us[steps], steps as f64 * dt)?;
    let velocity = |k: usize| -> DVector<f64> {
        if k == 0 {
            v0.clone()
        } else if k == steps {
            // Taylor from the last step: u'(T) ≈ (u_N - u_{N-1})/dt + dt/2·u''(T).
            (&us[k] - &us[k - 1]) / dt + &a_end * (0.5 * dt)
        } else {
            (&us[k + 1] - &us[k - 1]) / (2.0 * dt)
        }
    };

    let mut states = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    for &t in times {
        let s = (t / dt).min(steps as f64);
        let k = (s.floor() as usize).min(steps.saturating_sub(1));
        let th = s - k as f64;
        let (u, v) = if th <= 1e-12 {
            (us[k].clone(), velocity(k))
        } else if th >= 1.0 - 1e-12 {
            (us[k + 1].clone(), velocity(k + 1))
        } else {
            let (ua, ub, va, vb) = (&us[k], &us[k + 1], velocity(k), velocity(k + 1));
            let h00 = 2.0 * th.powi(3) - 3.0 * th * th + 1.0;
            let h10 = th.powi(3) - 2.0 * th * th + th;
            let h01 = -2.0 * th.powi(3) + 3.0 * th * th;
            let h11 = th.powi(3) - th * th;
            let u = ua * h00 + &va * (h10 * dt) + ub * h01 + &vb * (h11 * dt);
            let d00 = (6.0 * th * th - 6.0 * th) / dt;
            let d10 = 3.0 * th * th - 4.0 * th + 1.0;
            let d01 = (-6.0 * th * th + 6.0 * th) / dt;
            let d11 = 3.0 * th * th - 2.0 * th;
            let v = ua * d00 + &va * d10 + ub * d01 + &vb * d11;
            (u, v)
        };
        states.push(grams.embed(&u));
        velocities.push(grams.embed(&v));
    }
    Ok(Trajectory {
        tag,
        times: times.to_vec(),
        states,
        velocities,
    })
}
