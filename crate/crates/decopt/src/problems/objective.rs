//! Objective oracles: value, (sub)gradient and declared constants.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::operators::LinearOperator;

/// Declared constants: strong convexity `mu`, smoothness `l`, subgradient bound `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub mu: f64,
    pub l: Option<f64>,
    pub m: Option<f64>,
}

/// Coordinate-wise box `lo <= u <= hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoxDomain {
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        Self { lo: Vector::from_element(dim, -radius), hi: Vector::from_element(dim, radius) }
    }

    pub fn project(&self, u: &Vector) -> Vector {
        Vector::from_iterator(u.len(), u.iter().enumerate().map(|(i, &x)| x.clamp(self.lo[i], self.hi[i])))
    }

    /// Largest Euclidean norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lo.iter().zip(self.hi.iter()).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum::<f64>().sqrt()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }
}

/// Behaviour behind an [`ObjectiveOracle`]. `gradient` returns a subgradient for
/// nonsmooth objectives.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, u: &Vector) -> f64;
    fn gradient(&self, u: &Vector) -> Vector;
    fn constants(&self) -> Constants;
    fn domain(&self) -> Option<&BoxDomain> {
        None
    }
    /// (H, g, c) with f(u) = 0.5 u^T H u + g^T u + c, when f is quadratic.
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        None
    }
}

/// Shared handle to an objective.
#[derive(Clone)]
pub struct ObjectiveOracle(Arc<dyn Objective>);

impl fmt::Debug for ObjectiveOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObjectiveOracle(dim {}, {:?})", self.dim(), self.constants())
    }
}

impl ObjectiveOracle {
    pub fn new(inner: impl Objective + 'static) -> Self {
        Self(Arc::new(inner))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn value(&self, u: &Vector) -> f64 {
        self.0.value(u)
    }

    pub fn gradient(&self, u: &Vector) -> Vector {
        self.0.gradient(u)
    }

    pub fn subgradient(&self, u: &Vector) -> Vector {
        self.0.gradient(u)
    }

    pub fn constants(&self) -> Constants {
        self.0.constants()
    }

    pub fn domain(&self) -> Option<&BoxDomain> {
        self.0.domain()
    }

    pub fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        self.0.quadratic_form()
    }

    /// Same oracle with overridden constants.
    pub fn with_constants(&self, constants: Constants) -> Self {
        Self::new(Declared { inner: self.clone(), constants })
    }

    /// Same oracle restricted to a box domain.
    pub fn with_domain(&self, domain: BoxDomain) -> Self {
        Self::new(Domained { inner: self.clone(), domain })
    }
}

/// 0.5 x^T Q x + q^T x + (mu_shift / 2) |x|^2.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub q_mat: Matrix,
    pub q: Vector,
    pub mu_shift: f64,
    mu: f64,
    l: f64,
}

impl Quadratic {
    pub fn new(q_mat: Matrix, q: Vector, mu_shift: f64) -> Result<Self> {
        if q_mat.nrows() != q_mat.ncols() || q_mat.nrows() != q.len() {
            return Err(Error::invalid("quadratic: Q must be square and match q"));
        }
        let asym = linalg::asymmetry(&q_mat);
        if asym > 1e-12 * (1.0 + q_mat.amax()) {
            return Err(Error::invalid(format!("quadratic: Q not symmetric (asymmetry {asym:e})")));
        }
        let ev = linalg::sym_eigenvalues(&q_mat);
        let (lo, hi) = match (ev.first(), ev.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        if lo < -1e-10 * (1.0 + hi.abs()) {
            return Err(Error::invalid(format!("quadratic: Q not PSD (lambda_min {lo:e})")));
        }
        Ok(Self { q_mat, q, mu_shift, mu: lo.max(0.0) + mu_shift, l: hi.max(0.0) + mu_shift })
    }

    /// True when the oracle has no curvature at all (mu = L = 0).
    pub fn is_degenerate(&self) -> bool {
        self.l == 0.0
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.q.len()
    }
    fn value(&self, u: &Vector) -> f64 {
        0.5 * u.dot(&(&self.q_mat * u)) + self.q.dot(u) + 0.5 * self.mu_shift * u.norm_squared()
    }
    fn gradient(&self, u: &Vector) -> Vector {
        &self.q_mat * u + &self.q + self.mu_shift * u
    }
    fn constants(&self) -> Constants {
        Constants { mu: self.mu, l: Some(self.l), m: None }
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        let n = self.q.len();
        Some((&self.q_mat + Matrix::identity(n, n) * self.mu_shift, self.q.clone(), 0.0))
    }
}

/// Oracle for 0.5 x^T Q x + q^T x + (mu_shift / 2) |x|^2.
pub fn quadratic_oracle(q_mat: Matrix, q: Vector, mu_shift: f64) -> Result<ObjectiveOracle> {
    Ok(ObjectiveOracle::new(Quadratic::new(q_mat, q, mu_shift)?))
}

/// sum_i w_i |u_i - g_i| + (mu / 2) |u|^2, optionally on a box.
#[derive(Clone, Debug)]
pub struct WeightedL1 {
    pub weights: Vector,
    pub center: Vector,
    pub mu: f64,
    pub domain: Option<BoxDomain>,
}

impl Objective for WeightedL1 {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, u: &Vector) -> f64 {
        let l1: f64 = (0..u.len()).map(|i| self.weights[i] * (u[i] - self.center[i]).abs()).sum();
        l1 + 0.5 * self.mu * u.norm_squared()
    }
    fn gradient(&self, u: &Vector) -> Vector {
        Vector::from_fn(u.len(), |i, _| {
            let d = u[i] - self.center[i];
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            self.weights[i] * s + self.mu * u[i]
        })
    }
    fn constants(&self) -> Constants {
        let w = self.weights.norm();
        let m = if self.mu == 0.0 { Some(w) } else { self.domain.as_ref().map(|d| w + self.mu * d.max_norm()) };
        Constants { mu: self.mu, l: None, m }
    }
    fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }
}

/// f placed on the coordinates `positions` of a larger vector.
struct Embedded {
    positions: Vec<usize>,
    inner: ObjectiveOracle,
}

/// Sum of objectives each acting on a subset of coordinates of a `dim`-vector.
pub struct SumOfParts {
    dim: usize,
    parts: Vec<Embedded>,
}

impl SumOfParts {
    pub fn new(dim: usize, parts: Vec<(Vec<usize>, ObjectiveOracle)>) -> Result<Self> {
        for (pos, f) in &parts {
            if pos.len() != f.dim() || pos.iter().any(|&p| p >= dim) {
                return Err(Error::invalid("sum of parts: positions do not match part dimension"));
            }
        }
        Ok(Self { dim, parts: parts.into_iter().map(|(positions, inner)| Embedded { positions, inner }).collect() })
    }

    fn gather(&self, e: &Embedded, u: &Vector) -> Vector {
        Vector::from_iterator(e.positions.len(), e.positions.iter().map(|&p| u[p]))
    }
}

impl Objective for SumOfParts {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, u: &Vector) -> f64 {
        self.parts.iter().map(|e| e.inner.value(&self.gather(e, u))).sum()
    }
    fn gradient(&self, u: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim);
        for e in &self.parts {
            let gi = e.inner.gradient(&self.gather(e, u));
            for (k, &p) in e.positions.iter().enumerate() {
                g[p] += gi[k];
            }
        }
        g
    }
    fn constants(&self) -> Constants {
        // Coordinates covered by no part carry no curvature.
        let mut covered = vec![false; self.dim];
        for e in &self.parts {
            for &p in &e.positions {
                covered[p] = true;
            }
        }
        let all_covered = covered.iter().all(|&c| c);
        let cs: Vec<Constants> = self.parts.iter().map(|e| e.inner.constants()).collect();
        let mu = if all_covered { cs.iter().map(|c| c.mu).fold(f64::INFINITY, f64::min) } else { 0.0 };
        let l = cs.iter().map(|c| c.l).try_fold(0.0f64, |acc, l| l.map(|l| acc.max(l)));
        let m = cs.iter().map(|c| c.m).try_fold(0.0f64, |acc, m| m.map(|m| acc + m * m)).map(f64::sqrt);
        Constants { mu: if mu.is_finite() { mu } else { 0.0 }, l, m }
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        let mut h = Matrix::zeros(self.dim, self.dim);
        let mut g = Vector::zeros(self.dim);
        let mut c = 0.0;
        for e in &self.parts {
            let (hi, gi, ci) = e.inner.quadratic_form()?;
            for (a, &pa) in e.positions.iter().enumerate() {
                g[pa] += gi[a];
                for (b, &pb) in e.positions.iter().enumerate() {
                    h[(pa, pb)] += hi[(a, b)];
                }
            }
            c += ci;
        }
        Some((h, g, c))
    }
}

/// H_r(u) = G(u) + (r/2) |B u - b|^2.
struct Penalized {
    base: ObjectiveOracle,
    b_op: LinearOperator,
    b: Vector,
    r: f64,
    sigma_max_sq: Option<f64>,
}

impl Objective for Penalized {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, u: &Vector) -> f64 {
        self.base.value(u) + 0.5 * self.r * (self.b_op.apply(u) - &self.b).norm_squared()
    }
    fn gradient(&self, u: &Vector) -> Vector {
        self.base.gradient(u) + self.r * self.b_op.adjoint(&(self.b_op.apply(u) - &self.b))
    }
    fn constants(&self) -> Constants {
        let c = self.base.constants();
        Constants { mu: c.mu, l: c.l.zip(self.sigma_max_sq).map(|(l, s)| l + self.r * s), m: c.m }
    }
    fn domain(&self) -> Option<&BoxDomain> {
        self.base.domain()
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        let (h, g, c) = self.base.quadratic_form()?;
        let bm = self.b_op.to_dense();
        let h = h + self.r * bm.transpose() * &bm;
        let g = g - self.r * bm.transpose() * &self.b;
        Some((h, g, c + 0.5 * self.r * self.b.norm_squared()))
    }
}

/// Oracle for G(u) + (r/2) |B u - b|^2.
///
/// The smoothness constant uses sigma_max^2(B) from a dense SVD, so B is applied
/// once per column here; use [`penalize_with_bound`] to supply it instead.
pub fn penalize(oracle: &ObjectiveOracle, b_op: &LinearOperator, b: &Vector, r: f64) -> Result<ObjectiveOracle> {
    let smax = crate::operators::spectral_bounds(b_op).map(|s| s.sigma_max_sq).ok();
    penalize_with_bound(oracle, b_op, b, r, smax)
}

/// [`penalize`] with a caller-supplied bound on sigma_max^2(B).
pub fn penalize_with_bound(
    oracle: &ObjectiveOracle,
    b_op: &LinearOperator,
    b: &Vector,
    r: f64,
    sigma_max_sq: Option<f64>,
) -> Result<ObjectiveOracle> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("penalty coefficient must be positive, got {r}")));
    }
    if b_op.cols() != oracle.dim() || b_op.rows() != b.len() {
        return Err(Error::invalid("penalize: operator dimensions do not match"));
    }
    Ok(ObjectiveOracle::new(Penalized { base: oracle.clone(), b_op: b_op.clone(), b: b.clone(), r, sigma_max_sq }))
}

/// G(u) + (nu/2) |u0 - u|^2.
struct Regularized {
    base: ObjectiveOracle,
    u0: Vector,
    nu: f64,
}

impl Objective for Regularized {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, u: &Vector) -> f64 {
        self.base.value(u) + 0.5 * self.nu * (u - &self.u0).norm_squared()
    }
    fn gradient(&self, u: &Vector) -> Vector {
        self.base.gradient(u) + self.nu * (u - &self.u0)
    }
    fn constants(&self) -> Constants {
        let c = self.base.constants();
        Constants { mu: c.mu + self.nu, l: c.l.map(|l| l + self.nu), m: c.m }
    }
    fn domain(&self) -> Option<&BoxDomain> {
        self.base.domain()
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        let (h, g, c) = self.base.quadratic_form()?;
        let n = self.u0.len();
        Some((h + Matrix::identity(n, n) * self.nu, g - self.nu * &self.u0, c + 0.5 * self.nu * self.u0.norm_squared()))
    }
}

/// Oracle for G(u) + (nu/2) |u0 - u|^2 with mu' = mu + nu and L' = L + nu.
pub fn regularize(oracle: &ObjectiveOracle, u0: &Vector, nu: f64) -> Result<ObjectiveOracle> {
    if !(nu > 0.0) {
        return Err(Error::invalid(format!("regularization weight must be positive, got {nu}")));
    }
    if u0.len() != oracle.dim() {
        return Err(Error::invalid("regularize: anchor dimension mismatch"));
    }
    Ok(ObjectiveOracle::new(Regularized { base: oracle.clone(), u0: u0.clone(), nu }))
}

struct Declared {
    inner: ObjectiveOracle,
    constants: Constants,
}

impl Objective for Declared {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, u: &Vector) -> f64 {
        self.inner.value(u)
    }
    fn gradient(&self, u: &Vector) -> Vector {
        self.inner.gradient(u)
    }
    fn constants(&self) -> Constants {
        self.constants
    }
    fn domain(&self) -> Option<&BoxDomain> {
        self.inner.domain()
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        self.inner.quadratic_form()
    }
}

struct Domained {
    inner: ObjectiveOracle,
    domain: BoxDomain,
}

impl Objective for Domained {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, u: &Vector) -> f64 {
        self.inner.value(u)
    }
    fn gradient(&self, u: &Vector) -> Vector {
        self.inner.gradient(u)
    }
    fn constants(&self) -> Constants {
        self.inner.constants()
    }
    fn domain(&self) -> Option<&BoxDomain> {
        Some(&self.domain)
    }
    fn quadratic_form(&self) -> Option<(Matrix, Vector, f64)> {
        self.inner.quadratic_form()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_quadratic() {
        let f = quadratic_oracle(Matrix::identity(3, 3), Vector::zeros(3), 0.0).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(f.gradient(&x), x);
        let c = f.constants();
        assert_eq!((c.mu, c.l), (1.0, Some(1.0)));
    }

    #[test]
    fn linear_quadratic_is_flagged() {
        let mut e1 = Vector::zeros(2);
        e1[0] = 1.0;
        let q = Quadratic::new(Matrix::zeros(2, 2), e1, 0.0).unwrap();
        assert!(q.is_degenerate());
        assert_eq!(q.constants().mu, 0.0);
    }

    #[test]
    fn asymmetric_rejected() {
        let q = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(quadratic_oracle(q, Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn regularize_guards_and_anchor() {
        let f = quadratic_oracle(Matrix::identity(2, 2), Vector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        let u0 = Vector::from_vec(vec![0.3, -0.2]);
        assert!(regularize(&f, &u0, 0.0).is_err());
        let g = regularize(&f, &u0, 0.5).unwrap();
        assert_eq!(g.value(&u0), f.value(&u0));
        assert_eq!(g.gradient(&u0), f.gradient(&u0));
        assert_eq!(g.constants().mu, 1.5);
    }

    #[test]
    fn penalty_vanishes_when_feasible() {
        let f = quadratic_oracle(Matrix::identity(2, 2), Vector::zeros(2), 0.0).unwrap();
        let b = LinearOperator::dense(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), crate::operators::Tag::Other);
        let h = penalize(&f, &b, &Vector::from_vec(vec![1.0]), 7.0).unwrap();
        let u = Vector::from_vec(vec![0.25, 0.75]);
        assert_eq!(h.value(&u), f.value(&u));
    }
}
