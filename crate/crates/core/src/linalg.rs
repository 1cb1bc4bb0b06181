//! Dense and sparse linear-algebra helpers shared by the discretization layers.
//!
//! Complex Hermitian data are handled by realification: a complex `p×q` matrix
//! `A = P + iQ` acts on `u = a + ib` like the real `2p×2q` block matrix
//! `[[P, -Q], [Q, P]]` acting on `(a, b)`. Hermitian forms become symmetric
//! forms, so every discrete operator downstream is real symmetric.

use nalgebra::{Complex, DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest fill estimate (`n * (bandwidth + 1)`) handed to the sparse Cholesky path.
const DIRECT_FILL_LIMIT: usize = 40_000_000;

/// Relative residual target of the conjugate-gradient fallback.
pub const CG_TOLERANCE: f64 = 1e-12;

pub fn realify(a: &DMatrix<C64>) -> DMatrix<f64> {
    let (p, q) = a.shape();
    let mut r = DMatrix::zeros(2 * p, 2 * q);
    for i in 0..p {
        for j in 0..q {
            let z = a[(i, j)];
            r[(i, j)] = z.re;
            r[(i, j + q)] = -z.im;
            r[(i + p, j)] = z.im;
            r[(i + p, j + q)] = z.re;
        }
    }
    r
}

/// Inverse of [`realify`] for matrices that commute with the complex structure.
/// Reads the left block column `[Re; Im]`.
pub fn complexify(r: &DMatrix<f64>) -> DMatrix<C64> {
    let (p, q) = (r.nrows() / 2, r.ncols() / 2);
    DMatrix::from_fn(p, q, |i, j| C64::new(r[(i, j)], r[(i + p, j)]))
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn is_real(a: &DMatrix<C64>) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// `max|a - a*| / max|a|`, zero for the zero matrix.
pub fn hermitian_defect(a: &DMatrix<C64>) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    let adj = a.adjoint();
    (a - adj).iter().fold(0.0_f64, |m, z| m.max(z.norm())) / scale
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Operator norm `C^q -> C^p` (largest singular value).
pub fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

// ---------------------------------------------------------------------------
// Sparse helpers
// ---------------------------------------------------------------------------

pub fn csr_from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn csr_matvec_into(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in offsets[i]..offsets[i + 1] {
            acc += vals[k] * x[cols[k]];
        }
        *yi = acc;
    }
}

pub fn csr_matvec(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    csr_matvec_into(a, x.as_slice(), y.as_mut_slice());
    y
}

/// `A^T x` without forming the transpose.
pub fn csr_tr_matvec(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.ncols());
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    for i in 0..a.nrows() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for k in offsets[i]..offsets[i + 1] {
            y[cols[k]] += vals[k] * xi;
        }
    }
    y
}

/// Sub-matrix selecting `rows` and `cols` (given as index lists into `a`).
pub fn csr_select(a: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> CsrMatrix<f64> {
    let mut col_map = vec![usize::MAX; a.ncols()];
    for (new, &old) in cols.iter().enumerate() {
        col_map[old] = new;
    }
    let offsets = a.row_offsets();
    let ci = a.col_indices();
    let vals = a.values();
    let mut coo = CooMatrix::new(rows.len(), cols.len());
    for (new_i, &i) in rows.iter().enumerate() {
        for k in offsets[i]..offsets[i + 1] {
            let j = col_map[ci[k]];
            if j != usize::MAX {
                coo.push(new_i, j, vals[k]);
            }
        }
    }
    CsrMatrix::from(&coo)
}

pub fn csr_diagonal(a: &CsrMatrix<f64>) -> Vec<f64> {
    let mut d = vec![0.0; a.nrows().min(a.ncols())];
    let offsets = a.row_offsets();
    let ci = a.col_indices();
    let vals = a.values();
    for (i, di) in d.iter_mut().enumerate() {
        for k in offsets[i]..offsets[i + 1] {
            if ci[k] == i {
                *di += vals[k];
            }
        }
    }
    d
}

pub fn csr_bandwidth(a: &CsrMatrix<f64>) -> usize {
    let offsets = a.row_offsets();
    let ci = a.col_indices();
    let mut bw = 0;
    for i in 0..a.nrows() {
        for &j in &ci[offsets[i]..offsets[i + 1]] {
            bw = bw.max(i.abs_diff(j));
        }
    }
    bw
}

pub fn csr_max_abs(a: &CsrMatrix<f64>) -> f64 {
    a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max|a_ij - a_ji| / max|a_ij|`.
pub fn csr_symmetry_defect(a: &CsrMatrix<f64>) -> f64 {
    let scale = csr_max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    let t = a.transpose();
    let diff = a - &t;
    csr_max_abs(&diff) / scale
}

pub fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Linear combination `alpha * a + beta * b` of sparse matrices of equal shape.
pub fn csr_axpby(alpha: f64, a: &CsrMatrix<f64>, beta: f64, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        coo.push(i, j, alpha * v);
    }
    for (i, j, v) in b.triplet_iter() {
        coo.push(i, j, beta * v);
    }
    CsrMatrix::from(&coo)
}

// ---------------------------------------------------------------------------
// SPD solves
// ---------------------------------------------------------------------------

/// Factor-once solver for symmetric positive definite sparse systems.
///
/// Banded systems (every 1D operator, small 2D ones) use a sparse Cholesky
/// factorization; large 2D systems fall back to Jacobi-preconditioned CG at
/// relative residual [`CG_TOLERANCE`].
pub enum SpdSolver {
    Direct(Box<CscCholesky<f64>>),
    Cg {
        matrix: CsrMatrix<f64>,
        inv_diag: Vec<f64>,
    },
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdSolver::Direct(_) => write!(f, "SpdSolver::Direct"),
            SpdSolver::Cg { matrix, .. } => write!(f, "SpdSolver::Cg(n = {})", matrix.nrows()),
        }
    }
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension(format!("SPD solver needs a square matrix, got {}x{}", n, a.ncols())));
        }
        let bw = csr_bandwidth(a);
        if n.saturating_mul(bw + 1) <= DIRECT_FILL_LIMIT {
            let csc = CscMatrix::from(a);
            let chol = CscCholesky::factor(&csc).map_err(|e| Error::Solver(format!("Cholesky factorization failed: {e:?}")))?;
            Ok(SpdSolver::Direct(Box::new(chol)))
        } else {
            let diag = csr_diagonal(a);
            if let Some(i) = diag.iter().position(|d| *d <= 0.0) {
                return Err(Error::Solver(format!("non-positive diagonal entry at row {i}")));
            }
            Ok(SpdSolver::Cg {
                matrix: a.clone(),
                inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
            })
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Direct(c) => c.l().nrows(),
            SpdSolver::Cg { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            SpdSolver::Direct(chol) => {
                let x = chol.solve(b);
                Ok(DVector::from_column_slice(x.as_slice()))
            }
            SpdSolver::Cg { matrix, inv_diag } => pcg(matrix, inv_diag, b, CG_TOLERANCE, 20 * b.len() + 1000),
        }
    }

    pub fn solve_columns(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            SpdSolver::Direct(chol) => Ok(chol.solve(b)),
            SpdSolver::Cg { .. } => {
                let mut x = DMatrix::zeros(b.nrows(), b.ncols());
                for j in 0..b.ncols() {
                    let col = self.solve(&b.column(j).into_owned())?;
                    x.set_column(j, &col);
                }
                Ok(x)
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(a: &CsrMatrix<f64>, inv_diag: &[f64], b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = DVector::from_fn(n, |i, _| r[i] * inv_diag[i]);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    for it in 0..max_iter {
        csr_matvec_into(a, p.as_slice(), ap.as_mut_slice());
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::Solver(format!("CG breakdown at iteration {it}: matrix not positive definite")));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let res = r.norm() / bnorm;
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.axpy(1.0, &z, beta);
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: r.norm() / bnorm,
    })
}

// ---------------------------------------------------------------------------
// LAPACK eigensolvers
// ---------------------------------------------------------------------------

/// All eigenpairs of a symmetric tridiagonal matrix (ascending), via `dstevr`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    if off.len() + 1 != n {
        return Err(Error::Dimension(format!("tridiagonal: {} diagonal vs {} off-diagonal entries", n, off.len())));
    }
    let ni = n as i32;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut m = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * n];
    let mut isuppz = vec![0i32; 2 * n];
    let lwork = (20 * n).max(1) as i32;
    let liwork = (10 * n).max(1) as i32;
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    let mut info = 0;
    unsafe {
        lapack::dstevr(
            b'V', b'A', ni, &mut d, &mut e, 0.0, 0.0, 0, 0, 0.0, &mut m, &mut w, &mut z, ni, &mut isuppz, &mut work, lwork,
            &mut iwork, liwork, &mut info,
        );
    }
    if info != 0 || m as usize != n {
        return Err(Error::Eigen(format!("dstevr returned info = {info}, {m} of {n} eigenpairs")));
    }
    Ok((w, DMatrix::from_vec(n, n, z)))
}

/// All eigenpairs of a dense symmetric matrix (ascending), via `dsyevr`.
pub fn dense_symmetric_eigen(mut a: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension("dense eigen needs a square matrix".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let ni = n as i32;
    let mut m = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * n];
    let mut isuppz = vec![0i32; 2 * n];
    let mut info = 0;
    let mut work_query = [0.0];
    let mut iwork_query = [0i32];
    unsafe {
        lapack::dsyevr(
            b'V', b'A', b'U', ni, a.as_mut_slice(), ni, 0.0, 0.0, 0, 0, 0.0, &mut m, &mut w, &mut z, ni, &mut isuppz,
            &mut work_query, -1, &mut iwork_query, -1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigen(format!("dsyevr workspace query returned info = {info}")));
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack::dsyevr(
            b'V', b'A', b'U', ni, a.as_mut_slice(), ni, 0.0, 0.0, 0, 0, 0.0, &mut m, &mut w, &mut z, ni, &mut isuppz,
            &mut work, lwork, &mut iwork, liwork, &mut info,
        );
    }
    if info != 0 || m as usize != n {
        return Err(Error::Eigen(format!("dsyevr returned info = {info}, {m} of {n} eigenpairs")));
    }
    Ok((w, DMatrix::from_vec(n, n, z)))
}
