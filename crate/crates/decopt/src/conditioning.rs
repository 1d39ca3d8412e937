//! Condition numbers of constraint families, block-scaling coefficients and
//! Chebyshev preconditioning of constraint operators.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, RANK_TOL};
use crate::operators::{LinearOperator, OperatorImpl, SpectralBounds, Tag};

/// mu_tilde at or below this fraction of max lambda_max(B_i B_i^T) counts as zero.
pub const MU_TILDE_ZERO_TOL: f64 = 1e-9;

/// Per-node constraint blocks B_1, ..., B_n.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFamily {
    pub blocks: Vec<Matrix>,
}

impl MatrixFamily {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("matrix family needs at least one block"));
        }
        Ok(Self { blocks })
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn transposed(&self) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b.transpose()).collect() }
    }

    /// max_i lambda_max(B_i B_i^T) = max_i sigma_max^2(B_i).
    pub fn max_block_sigma_sq(&self) -> f64 {
        self.blocks.iter().map(|b| linalg::sigma_bounds(b, RANK_TOL).0).fold(0.0, f64::max)
    }

    /// Block-diagonal dense assembly diag(B_1, ..., B_n).
    pub fn block_diag(&self) -> Matrix {
        linalg::block_diag(&self.blocks)
    }

    /// Horizontal stack (B_1 ... B_n).
    pub fn hstack(&self) -> Result<Matrix> {
        self.check_rows()?;
        Ok(linalg::hstack(&self.blocks))
    }

    fn check_rows(&self) -> Result<usize> {
        let m = self.blocks[0].nrows();
        if self.blocks.iter().any(|b| b.nrows() != m) {
            return Err(Error::invalid("family blocks must share the row dimension"));
        }
        Ok(m)
    }
}

/// Sum of B_i B_i^T (unscaled).
fn gram_sum(family: &MatrixFamily) -> Result<Matrix> {
    let m = family.check_rows()?;
    let mut s = Matrix::zeros(m, m);
    for b in &family.blocks {
        s += b * b.transpose();
    }
    Ok(s)
}

/// S_B = (1/n) sum_i B_i B_i^T.
pub fn interaction_matrix(family: &MatrixFamily) -> Result<Matrix> {
    Ok(gram_sum(family)? / family.n() as f64)
}

/// lambda_min+(S_B).
pub fn interaction_min_plus(family: &MatrixFamily) -> Result<f64> {
    let (_, min) = linalg::psd_extreme_eigenvalues(&gram_sum(family)?, RANK_TOL);
    Ok(min / family.n() as f64)
}

/// max_i lambda_max(B_i B_i^T) / lambda_min+(S_B); with `transposed`, the same for B_i^T.
pub fn mixed_condition_number(family: &MatrixFamily, transposed: bool) -> Result<f64> {
    let fam = if transposed { family.transposed() } else { family.clone() };
    let sum = gram_sum(&fam)?;
    let (max, min) = linalg::psd_extreme_eigenvalues(&sum, RANK_TOL);
    if max == 0.0 {
        return Err(Error::DegenerateFamily("interaction matrix is zero".into()));
    }
    Ok(fam.n() as f64 * fam.max_block_sigma_sq() / min)
}

/// Projected constants (mu_tilde, kappa_tilde) of the pair (B, D).
///
/// mu_tilde = (1/n) sigma_min+^2((B_1 ... B_n) P_kerD); kappa_tilde is
/// max_i lambda_max(B_i B_i^T) / mu_tilde, or exactly 1 when mu_tilde vanishes.
pub fn projected_condition_number(b_family: &MatrixFamily, d_family: &MatrixFamily) -> Result<(f64, f64)> {
    if b_family.n() != d_family.n() {
        return Err(Error::invalid("B and D families need the same node count"));
    }
    let m = b_family.check_rows()?;
    let mut sum = Matrix::zeros(m, m);
    for (b, d) in b_family.blocks.iter().zip(&d_family.blocks) {
        if b.ncols() != d.ncols() {
            return Err(Error::invalid("B_i and D_i must have the same column count"));
        }
        if d.iter().all(|&x| x == 0.0) {
            sum += b * b.transpose();
        } else {
            let basis = linalg::nullspace_basis(d, RANK_TOL);
            let bp = b * &basis;
            sum += &bp * bp.transpose();
        }
    }
    let max_block = b_family.max_block_sigma_sq();
    let (smax, smin) = linalg::psd_extreme_eigenvalues(&sum, RANK_TOL);
    let n = b_family.n() as f64;
    if smax == 0.0 || smin / n <= MU_TILDE_ZERO_TOL * max_block {
        return Ok((0.0, 1.0));
    }
    Ok((smin / n, n * max_block / smin))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingRegime {
    Coupled,
    CoupledLocalMuPos,
    CoupledLocalMuZero,
    Shared,
    IdenticalLocal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCoefficients {
    pub alpha_sq: f64,
    pub beta_sq: f64,
    pub gamma_sq: Option<f64>,
    pub regime: ScalingRegime,
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {x}")))
    }
}

/// beta^2 = (lambda_min+(S_A) + sigma_max^2(A)) / sigma_min+^2(W) for B = (A  beta W).
pub fn coupled_scaling(a: SpectralBounds, s_a_min: f64, w: SpectralBounds) -> Result<f64> {
    let mu_w = positive(w.sigma_min_plus_sq, "sigma_min+^2(W)")?;
    Ok((s_a_min + a.sigma_max_sq) / mu_w)
}

/// (alpha^2, beta^2) for B = ((A, alpha W), (beta C, 0)); `l_s` = (1/n) sigma_max^2(A').
pub fn mixed_scaling(
    a: SpectralBounds,
    mu_tilde_ac: f64,
    l_s: f64,
    c: SpectralBounds,
    w: SpectralBounds,
) -> Result<ScalingCoefficients> {
    let mu_w = positive(w.sigma_min_plus_sq, "sigma_min+^2(W)")?;
    let mu_c = positive(c.sigma_min_plus_sq, "sigma_min+^2(C)")?;
    let l_a = a.sigma_max_sq;
    Ok(if mu_tilde_ac > 0.0 {
        ScalingCoefficients {
            alpha_sq: (l_a + 0.25 * mu_tilde_ac) / mu_w,
            beta_sq: (l_s + 0.5 * mu_tilde_ac) / mu_c,
            gamma_sq: None,
            regime: ScalingRegime::CoupledLocalMuPos,
        }
    } else {
        ScalingCoefficients {
            alpha_sq: 2.0 * l_a / mu_w,
            beta_sq: (l_s + 2.0 * l_a) / mu_c,
            gamma_sq: None,
            regime: ScalingRegime::CoupledLocalMuZero,
        }
    })
}

/// gamma^2 for B~^T = (C~^T  gamma W): the coupled scaling of the transposed family.
pub fn shared_scaling(c_tilde: &MatrixFamily, w: SpectralBounds) -> Result<f64> {
    let t = c_tilde.transposed();
    let s_min = interaction_min_plus(&t)?;
    let max = t.max_block_sigma_sq();
    let a = SpectralBounds { sigma_max_sq: max, sigma_min_plus_sq: 0.0 };
    coupled_scaling(a, s_min, w)
}

/// Coefficients for identical shared constraints C~_i = C~ alongside coupled ones.
pub fn identical_local_scaling(
    a_family: &MatrixFamily,
    c_tilde: SpectralBounds,
    w: SpectralBounds,
) -> Result<ScalingCoefficients> {
    let mu_w = positive(w.sigma_min_plus_sq, "sigma_min+^2(W)")?;
    let s_a = positive(interaction_min_plus(a_family)?, "lambda_min+(S_A)")?;
    let mu_c = positive(c_tilde.sigma_min_plus_sq, "sigma_min+^2(C~)")?;
    let l_a = a_family.max_block_sigma_sq();
    Ok(identical_local_scaling_values(l_a, s_a, mu_c, mu_w))
}

/// Formula part of [`identical_local_scaling`] on plain numbers.
pub fn identical_local_scaling_values(l_a: f64, s_a: f64, mu_c: f64, mu_w: f64) -> ScalingCoefficients {
    ScalingCoefficients {
        alpha_sq: 2.0 * mu_c / s_a,
        beta_sq: (s_a + l_a) / mu_w,
        gamma_sq: Some(mu_c / mu_w),
        regime: ScalingRegime::IdenticalLocal,
    }
}

/// Chebyshev degree ceil(sqrt(sigma_max^2 / sigma_min+^2)), at least 1.
pub fn chebyshev_degree(bounds: SpectralBounds) -> usize {
    if bounds.sigma_min_plus_sq <= 0.0 {
        return 1;
    }
    (bounds.kappa().sqrt().ceil() as usize).max(1)
}

/// Runs the Chebyshev recurrence with the Gram map `g(v) = grad of 0.5 |B v - b|^2`.
fn chebyshev_core(v: &Vector, bounds: SpectralBounds, grad: impl Fn(&Vector) -> Vector) -> Vector {
    let (l, mu) = (bounds.sigma_max_sq, bounds.sigma_min_plus_sq);
    let n = chebyshev_degree(bounds);
    let rho = (l - mu).powi(2) / 16.0;
    let nu = (l + mu) / 2.0;
    let mut delta = -nu / 2.0;
    let mut p = -grad(v) / nu;
    let mut x = v + &p;
    for _ in 1..n {
        let beta = rho / delta;
        delta = -(nu + beta);
        p = (grad(&x) + beta * &p) / delta;
        x += &p;
    }
    x
}

/// Chebyshev iteration toward B v = b: `degree` forward and `degree` adjoint applies of B.
pub fn chebyshev_apply(v: &Vector, b_op: &LinearOperator, b: &Vector, bounds: SpectralBounds) -> Vector {
    chebyshev_core(v, bounds, |x| b_op.adjoint(&(b_op.apply(x) - b)))
}

/// Chebyshev iteration for a symmetric PSD operator used directly as the Gram map;
/// `bounds` hold (lambda_max, lambda_min+) of the operator.
pub fn chebyshev_apply_psd(v: &Vector, w_op: &LinearOperator, rhs: &Vector, bounds: SpectralBounds) -> Vector {
    chebyshev_core(v, bounds, |x| w_op.apply(x) - rhs)
}

enum Gram {
    /// B^T B through one forward and one adjoint apply.
    Normal(LinearOperator),
    /// A symmetric PSD operator through one forward apply.
    Psd(LinearOperator),
}

struct ChebyshevOp {
    gram: Gram,
    bounds: SpectralBounds,
}

impl ChebyshevOp {
    fn dim(&self) -> usize {
        match &self.gram {
            Gram::Normal(b) => b.cols(),
            Gram::Psd(w) => w.cols(),
        }
    }

    fn run(&self, x: &Vector) -> Vector {
        let y = match &self.gram {
            Gram::Normal(b) => chebyshev_core(x, self.bounds, |v| b.adjoint(&b.apply(v))),
            Gram::Psd(w) => chebyshev_core(x, self.bounds, |v| w.apply(v)),
        };
        x - y
    }
}

impl OperatorImpl for ChebyshevOp {
    fn rows(&self) -> usize {
        self.dim()
    }
    fn cols(&self) -> usize {
        self.dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.run(x)
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        // A polynomial in a symmetric operator is symmetric.
        self.run(y)
    }
}

/// Preconditioned constraint `K u = b'` with K = P(B^T B), equivalent to `B u = b`.
///
/// K u = u - chebyshev_apply(u, B, 0) and b' = chebyshev_apply(0, B, b), so that
/// K u - b' = u - chebyshev_apply(u, B, b) vanishes exactly on the solutions of B u = b.
pub fn chebyshev_operator(b_op: &LinearOperator, b: &Vector, bounds: SpectralBounds) -> (LinearOperator, Vector) {
    let k = LinearOperator::from_impl(Arc::new(ChebyshevOp { gram: Gram::Normal(b_op.clone()), bounds }), Tag::Other);
    let b_prime = chebyshev_apply(&Vector::zeros(b_op.cols()), b_op, b, bounds);
    (k, b_prime)
}

/// Polynomial P(W) of a symmetric PSD operator with the same kernel as W and
/// O(1) condition number, using ceil(sqrt(lambda_max / lambda_min+)) applies of W.
pub fn chebyshev_psd_operator(w_op: &LinearOperator, eig_bounds: SpectralBounds) -> LinearOperator {
    LinearOperator::from_impl(Arc::new(ChebyshevOp { gram: Gram::Psd(w_op.clone()), bounds: eig_bounds }), Tag::Other)
}

/// Certified bounds for the output of the Chebyshev preconditioner: singular values
/// of P(B^T B) on the image lie in [11/15, 19/15].
pub fn chebyshev_output_bounds() -> SpectralBounds {
    SpectralBounds { sigma_max_sq: (19.0f64 / 15.0).powi(2), sigma_min_plus_sq: (11.0f64 / 15.0).powi(2) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn coordinate_family() {
        let n = 5;
        let blocks = (0..n)
            .map(|i| {
                let mut e = Matrix::zeros(n, 1);
                e[(i, 0)] = 1.0;
                e
            })
            .collect();
        let fam = MatrixFamily::new(blocks).unwrap();
        let s = interaction_matrix(&fam).unwrap();
        assert!((s - Matrix::identity(n, n) / n as f64).norm() < 1e-15);
        assert_eq!(mixed_condition_number(&fam, false).unwrap(), n as f64);
        assert_eq!(mixed_condition_number(&fam, true).unwrap(), 1.0);
    }

    #[test]
    fn zero_family_is_degenerate() {
        let fam = MatrixFamily::new(vec![Matrix::zeros(2, 2); 3]).unwrap();
        assert!(matches!(mixed_condition_number(&fam, false), Err(Error::DegenerateFamily(_))));
    }

    #[test]
    fn invertible_d_gives_unit_kappa() {
        let b = MatrixFamily::new(vec![Matrix::identity(2, 2), Matrix::identity(2, 2)]).unwrap();
        let d = MatrixFamily::new(vec![Matrix::identity(2, 2) * 3.0, Matrix::identity(2, 2)]).unwrap();
        assert_eq!(projected_condition_number(&b, &d).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn scaling_formula_plugs() {
        let one = SpectralBounds { sigma_max_sq: 1.0, sigma_min_plus_sq: 1.0 };
        let w = SpectralBounds { sigma_max_sq: 2.0, sigma_min_plus_sq: 2.0 };
        assert_eq!(coupled_scaling(one, 1.0, w).unwrap(), 1.0);
        let s = mixed_scaling(one, 0.0, 1.0, one, one).unwrap();
        assert_eq!((s.alpha_sq, s.beta_sq), (2.0, 3.0));
        let s = identical_local_scaling_values(1.0, 1.0, 1.0, 1.0);
        assert_eq!((s.alpha_sq, s.beta_sq, s.gamma_sq), (2.0, 2.0, Some(1.0)));
        let zero_w = SpectralBounds { sigma_max_sq: 1.0, sigma_min_plus_sq: 0.0 };
        assert!(coupled_scaling(one, 1.0, zero_w).is_err());
    }

    #[test]
    fn chebyshev_identity_lands_on_rhs() {
        let b = LinearOperator::identity(3);
        let bounds = SpectralBounds { sigma_max_sq: 1.0, sigma_min_plus_sq: 1.0 };
        let out = chebyshev_apply(&v(&[7.0, -1.0, 2.0]), &b, &v(&[1.0, 2.0, 3.0]), bounds);
        assert!((out - v(&[1.0, 2.0, 3.0])).norm() < 1e-15);
    }

    #[test]
    fn chebyshev_two_step_trace() {
        // Hand trace: p0 = (0.4, 1.6); beta0 = -0.45; delta1 = -2.05;
        // p1 = ((-0.6, 2.4) + (-0.18, -0.72)) / -2.05; v2 = (32/41, 32/41).
        let b = LinearOperator::dense(Matrix::from_diagonal(&v(&[1.0, 2.0])), Tag::Other);
        let bounds = SpectralBounds { sigma_max_sq: 4.0, sigma_min_plus_sq: 1.0 };
        assert_eq!(chebyshev_degree(bounds), 2);
        let out = chebyshev_apply(&v(&[0.0, 0.0]), &b, &v(&[1.0, 2.0]), bounds);
        assert!((out - v(&[32.0 / 41.0, 32.0 / 41.0])).norm() < 1e-14);
    }
}
