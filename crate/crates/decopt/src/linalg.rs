//! Dense linear-algebra helpers used as ground truth at desk scale.
//!
//! Matrices are nalgebra types; SVDs and symmetric eigendecompositions go through
//! faer, whose SVD stays accurate on rank-deficient inputs.

use faer::Side;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Singular values at or below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full SVD: (U, singular values in descending order, V).
fn full_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let svd = to_faer(m).svd().expect("SVD did not converge");
    let s = svd.S().column_vector();
    let sv = (0..s.nrows()).map(|i| s[i]).collect();
    (from_faer(svd.U()), sv, from_faer(svd.V()))
}

/// Symmetric eigendecomposition of (m + m^T)/2: ascending eigenvalues and eigenvectors.
fn sym_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = to_faer(&sym).self_adjoint_eigen(Side::Lower).expect("eigendecomposition did not converge");
    let s = eig.S().column_vector();
    let ev: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    (ev, from_faer(eig.U()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev = sym_eigen(m).0;
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Singular values, descending.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv = full_svd(m).1;
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// (sigma_max^2, sigma_min+^2) of a dense matrix with the given relative rank tolerance.
pub fn sigma_bounds(m: &Matrix, rank_tol: f64) -> (f64, f64) {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0.0, 0.0);
    }
    let smin = sv.iter().copied().filter(|&s| s > rank_tol * smax).fold(f64::INFINITY, f64::min);
    (smax * smax, smin * smin)
}

/// Largest eigenvalue and smallest positive eigenvalue of a symmetric PSD matrix.
pub fn psd_extreme_eigenvalues(m: &Matrix, rank_tol: f64) -> (f64, f64) {
    let ev = sym_eigenvalues(m);
    let lmax = ev.last().copied().unwrap_or(0.0).max(0.0);
    if lmax == 0.0 {
        return (0.0, 0.0);
    }
    let lmin = ev.iter().copied().filter(|&l| l > rank_tol * lmax).fold(f64::INFINITY, f64::min);
    (lmax, lmin)
}

/// Numerical rank of a matrix.
pub fn rank(m: &Matrix, rank_tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Orthonormal basis of the null space, one column per basis vector.
pub fn nullspace_basis(m: &Matrix, rank_tol: f64) -> Matrix {
    let cols = m.ncols();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Matrix::identity(cols, cols);
    }
    let (_, sv, v) = full_svd(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    // Columns of V beyond the singular values span part of the kernel automatically.
    let null: Vec<usize> =
        (0..cols).filter(|&i| smax == 0.0 || sv.get(i).is_none_or(|&s| s <= rank_tol * smax)).collect();
    let mut basis = Matrix::zeros(cols, null.len());
    for (j, &i) in null.iter().enumerate() {
        basis.set_column(j, &v.column(i));
    }
    basis
}

/// Moore-Penrose pseudo-inverse.
pub fn pinv(m: &Matrix, rank_tol: f64) -> Matrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let (u, sv, v) = full_svd(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in sv.iter().enumerate() {
        if smax > 0.0 && s > rank_tol * smax {
            out += v.column(i) * u.column(i).transpose() / s;
        }
    }
    out
}

/// Minimizer of 0.5 u^T Q u + q^T u subject to B u = b, solved on the null space of B.
///
/// Requires Q positive definite on ker B and b in the image of B.
pub fn solve_equality_qp(q_mat: &Matrix, q: &Vector, b_mat: &Matrix, b: &Vector) -> Result<Vector> {
    let dim = q_mat.nrows();
    if b_mat.ncols() != dim || q.len() != dim || b_mat.nrows() != b.len() {
        return Err(Error::invalid("equality QP dimensions disagree"));
    }
    let particular = pinv(b_mat, RANK_TOL) * b;
    let res = (b_mat * &particular - b).norm();
    if res > 1e-8 * (1.0 + b.norm()) {
        return Err(Error::Infeasible(format!("right-hand side outside image, residual {res:e}")));
    }
    let n = nullspace_basis(b_mat, RANK_TOL);
    if n.ncols() == 0 {
        return Ok(particular);
    }
    let reduced = n.transpose() * q_mat * &n;
    let rhs = -(n.transpose() * (q_mat * &particular + q));
    let z = reduced
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| reduced.lu().solve(&rhs))
        .ok_or_else(|| Error::invalid("objective not strongly convex on the feasible subspace"))?;
    Ok(particular + n * z)
}

/// Least-squares residual norm of B u = b.
pub fn lstsq_residual(b_mat: &Matrix, b: &Vector) -> f64 {
    let u = pinv(b_mat, RANK_TOL) * b;
    (b_mat * u - b).norm()
}

/// Dense block-diagonal assembly.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Dense Kronecker product `a ⊗ I_k`.
pub fn kron_identity(a: &Matrix, k: usize) -> Matrix {
    a.kronecker(&Matrix::identity(k, k))
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of matrices with equal column counts.
pub fn vstack(blocks: &[Matrix]) -> Matrix {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &Matrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    (m - m.transpose()).amax()
}

/// Principal square root of a symmetric PSD matrix.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    if m.nrows() == 0 {
        return m.clone();
    }
    let (ev, q) = sym_eigen(m);
    let d = Vector::from_iterator(ev.len(), ev.iter().map(|l| l.max(0.0).sqrt()));
    &q * Matrix::from_diagonal(&d) * q.transpose()
}

/// Relative distance ‖a − b‖ / max(‖b‖, floor).
pub fn rel_dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
