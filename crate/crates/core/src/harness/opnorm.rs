//! Largest generalized singular value
//! σ = max_f sqrt(⟨Tf, G_t Tf⟩ / ⟨f, G_s f⟩)
//! of a linear map between weighted spaces.
//!
//! σ² is the top eigenvalue of B = G_s⁻¹ Tᵀ G_t T, which is self-adjoint in the
//! G_s inner product. The default method is Lanczos in that inner product with
//! full reorthogonalization; plain power iteration is kept for comparison.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{csr_matvec, csr_tr_matvec, tridiagonal_eigen, SpdSolver};

pub trait LinearMap {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>>;
}

impl LinearMap for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self * x)
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.tr_mul(y))
    }
}

impl LinearMap for CsrMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(csr_matvec(self, x))
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(csr_tr_matvec(self, y))
    }
}

/// A symmetric positive definite inner product with its inverse.
pub enum Gram<'a> {
    Diagonal(&'a [f64]),
    Sparse(&'a CsrMatrix<f64>, &'a SpdSolver),
    Dense(DMatrix<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl<'a> Gram<'a> {
    pub fn dense(g: DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(g.clone()).ok_or_else(|| Error::Solver("Gram matrix is not positive definite".into()))?;
        Ok(Gram::Dense(g, chol))
    }

    pub fn dim(&self) -> usize {
        match self {
            Gram::Diagonal(d) => d.len(),
            Gram::Sparse(a, _) => a.nrows(),
            Gram::Dense(g, _) => g.nrows(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Diagonal(d) => DVector::from_fn(x.len(), |i, _| d[i] * x[i]),
            Gram::Sparse(a, _) => csr_matvec(a, x),
            Gram::Dense(g, _) => g * x,
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Gram::Diagonal(d) => Ok(DVector::from_fn(b.len(), |i, _| b[i] / d[i])),
            Gram::Sparse(_, s) => s.solve(b),
            Gram::Dense(_, c) => Ok(c.solve(b)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpNormMethod {
    Lanczos,
    Power,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpNormOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: OpNormMethod,
    pub seed: u64,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        OpNormOptions {
            tol: 1e-8,
            max_iter: 400,
            method: OpNormMethod::Lanczos,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpNormResult {
    pub sigma_max: f64,
    pub iterations: usize,
    /// Estimates of σ² per iteration.
    pub history: Vec<f64>,
}

pub fn operator_norm(t: &dyn LinearMap, source: &Gram, target: &Gram, opts: &OpNormOptions) -> Result<OpNormResult> {
    let n = t.ncols();
    if source.dim() != n || target.dim() != t.nrows() {
        return Err(Error::Dimension(format!(
            "map is {}x{}, source Gram {}, target Gram {}",
            t.nrows(),
            n,
            source.dim(),
            target.dim()
        )));
    }
    if n == 0 {
        return Ok(OpNormResult { sigma_max: 0.0, iterations: 0, history: vec![] });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    // H x = Tᵀ G_t T x
    let h = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let tx = t.apply(x)?;
        t.apply_transpose(&target.apply(&tx))
    };
    match opts.method {
        OpNormMethod::Power => power(&h, source, x0, opts),
        OpNormMethod::Lanczos => lanczos(&h, source, x0, opts),
    }
}

fn power(h: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>, source: &Gram, x0: DVector<f64>, opts: &OpNormOptions) -> Result<OpNormResult> {
    let mut x = x0;
    let mut history = Vec::new();
    let mut prev = f64::NAN;
    for it in 1..=opts.max_iter {
        let gx = source.apply(&x);
        let norm = x.dot(&gx).sqrt();
        if norm == 0.0 {
            return Ok(OpNormResult { sigma_max: 0.0, iterations: it, history });
        }
        x /= norm;
        let hx = h(&x)?;
        let rho = x.dot(&hx).max(0.0);
        history.push(rho);
        if rho == 0.0 {
            return Ok(OpNormResult { sigma_max: 0.0, iterations: it, history });
        }
        if (rho - prev).abs() <= opts.tol * rho {
            return Ok(OpNormResult { sigma_max: rho.sqrt(), iterations: it, history });
        }
        prev = rho;
        x = source.solve(&hx)?;
    }
    Err(no_convergence(opts.max_iter, &history))
}

fn no_convergence(iterations: usize, history: &[f64]) -> Error {
    let tail = history.len().saturating_sub(10);
    Error::NoConvergence {
        iterations,
        history: history[tail..].to_vec(),
    }
}

fn lanczos(h: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>, source: &Gram, x0: DVector<f64>, opts: &OpNormOptions) -> Result<OpNormResult> {
    let n = x0.len();
    let kmax = opts.max_iter.min(n);
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut gq: Vec<DVector<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history = Vec::new();

    let g0 = source.apply(&x0);
    let nrm = x0.dot(&g0).sqrt();
    q.push(x0 / nrm);
    gq.push(g0 / nrm);
    for k in 0..kmax {
        let hq = h(&q[k])?;
        let a = q[k].dot(&hq);
        alpha.push(a);
        let mut w = source.solve(&hq)?;
        // Full reorthogonalization in the G_s inner product, applied twice.
        for _ in 0..2 {
            for (qi, gqi) in q.iter().zip(&gq) {
                let c = w.dot(gqi);
                w.axpy(-c, qi, 1.0);
            }
        }
        let gw = source.apply(&w);
        let b = w.dot(&gw).max(0.0).sqrt();

        let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
        let top = *theta.last().unwrap();
        history.push(top.max(0.0));
        let last_comp = s[(k, k)].abs();
        let residual = b * last_comp;
        let scale = top.abs().max(alpha.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        if scale == 0.0 {
            return Ok(OpNormResult { sigma_max: 0.0, iterations: k + 1, history });
        }
        if residual <= opts.tol * top.max(f64::MIN_POSITIVE) || b <= 1e-14 * scale || k + 1 == n {
            return Ok(OpNormResult {
                sigma_max: top.max(0.0).sqrt(),
                iterations: k + 1,
                history,
            });
        }
        beta.push(b);
        q.push(w / b);
        gq.push(gw / b);
    }
    Err(no_convergence(kmax, &history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn dense_oracle(t: &DMatrix<f64>, gs: &DMatrix<f64>, gt: &DMatrix<f64>) -> f64 {
        let l = nalgebra::Cholesky::new(gs.clone()).unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let m = &linv * t.transpose() * gt * t * linv.transpose();
        let ev = crate::linalg::symmetric_eigenvalues(&m);
        ev.last().unwrap().sqrt()
    }

    #[test]
    fn identity_and_zero() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let gs = Gram::dense(g.clone()).unwrap();
        let gt = Gram::dense(g).unwrap();
        let r = operator_norm(&DMatrix::<f64>::identity(3, 3), &gs, &gt, &OpNormOptions::default()).unwrap();
        assert!((r.sigma_max - 1.0).abs() < 1e-12);
        let r = operator_norm(&DMatrix::<f64>::zeros(3, 3), &gs, &gt, &OpNormOptions::default()).unwrap();
        assert_eq!(r.sigma_max, 0.0);
    }

    #[test]
    fn random_against_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let t = DMatrix::from_fn(12, 12, |_, _| rng.random::<f64>() - 0.5);
            let gs = random_spd(12, &mut rng);
            let gt = random_spd(12, &mut rng);
            let exact = dense_oracle(&t, &gs, &gt);
            for method in [OpNormMethod::Lanczos, OpNormMethod::Power] {
                let opts = OpNormOptions { method, max_iter: 5000, tol: 1e-12, ..Default::default() };
                let r = operator_norm(&t, &Gram::dense(gs.clone()).unwrap(), &Gram::dense(gt.clone()).unwrap(), &opts).unwrap();
                assert!((r.sigma_max - exact).abs() <= 1e-7 * exact, "{method:?}: {} vs {exact}", r.sigma_max);
            }
        }
    }

    #[test]
    fn power_reports_history_on_failure() {
        let t = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.999999, 0.5]));
        let g = Gram::dense(DMatrix::identity(3, 3)).unwrap();
        let g2 = Gram::dense(DMatrix::identity(3, 3)).unwrap();
        let opts = OpNormOptions { method: OpNormMethod::Power, max_iter: 3, tol: 1e-15, ..Default::default() };
        match operator_norm(&t, &g, &g2, &opts) {
            Err(Error::NoConvergence { iterations, history }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}
