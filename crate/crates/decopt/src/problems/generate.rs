//! Random instances with planted feasible points.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AffineProblem, BoxDomain, MixedProblemData, NodeObjective, ObjectiveOracle, QuadraticSpec, WeightedL1};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::network::{self, Topology};
use crate::operators::{instrumented, kron_gossip, Tag};

/// Shape of a random instance. Zero row counts switch a constraint group off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceSpec {
    pub n: usize,
    /// Local dimension d_i (same for all nodes).
    pub d: usize,
    pub d_tilde: usize,
    /// Rows of the coupled constraints.
    pub m: usize,
    /// Rows of each local constraint block.
    pub p: usize,
    /// Rows of each shared constraint block.
    pub p_tilde: usize,
    /// Eigenvalue range of the node Hessians.
    pub mu: f64,
    pub l: f64,
    pub topology: Topology,
    /// When set, all A_i equal one matrix whose squared singular values spread over
    /// [1, a_kappa], so the mixed condition number of A is exactly a_kappa.
    pub a_kappa: Option<f64>,
    /// Same for the local blocks C_i, fixing kappa_C.
    pub c_kappa: Option<f64>,
    /// When set, W is the weighted path with this condition number and `n` is ignored.
    pub kappa_w: Option<f64>,
    /// All node Hessians share one eigenbasis, so their sum keeps condition number L/mu.
    /// With independent bases the sum is better conditioned than each node.
    pub common_basis: bool,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            n: 4,
            d: 3,
            d_tilde: 0,
            m: 2,
            p: 0,
            p_tilde: 0,
            mu: 1.0,
            l: 10.0,
            topology: Topology::Path,
            a_kappa: None,
            c_kappa: None,
            kappa_w: None,
            common_basis: false,
        }
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Matrix {
    gaussian_matrix(rng, d, d).qr().q()
}

/// Symmetric matrix with eigenvalues spread evenly over [mu, l] (both attained when d >= 2).
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, mu: f64, l: f64) -> Matrix {
    let q = random_orthogonal(rng, d);
    spd_with_basis(&q, mu, l)
}

/// q diag(spread over [mu, l]) q^T.
pub fn spd_with_basis(q: &Matrix, mu: f64, l: f64) -> Matrix {
    let d = q.nrows();
    let ev = Vector::from_fn(d, |i, _| if d == 1 { mu } else { mu + (l - mu) * i as f64 / (d - 1) as f64 });
    let m = q * Matrix::from_diagonal(&ev) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random rows x cols matrix whose nonzero squared singular values spread evenly over [1, kappa].
pub fn matrix_with_kappa<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, kappa: f64) -> Matrix {
    let k = rows.min(cols);
    let u = random_orthogonal(rng, rows);
    let v = random_orthogonal(rng, cols);
    let mut s = Matrix::zeros(rows, cols);
    for i in 0..k {
        let sq = if k == 1 { 1.0 } else { 1.0 + (kappa - 1.0) * i as f64 / (k - 1) as f64 };
        s[(i, i)] = sq.sqrt();
    }
    u * s * v.transpose()
}

/// Random instance; returns the data and the planted feasible point (x_i, x~).
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &InstanceSpec,
) -> Result<(MixedProblemData, Vec<Vector>, Vector)> {
    let w = match spec.kappa_w {
        Some(k) => network::path_for_kappa(k)?.w,
        None => network::standard_topology(spec.topology, spec.n)?.w,
    };
    let n = w.nrows();
    if n < 2 {
        return Err(Error::invalid("random instances need n >= 2"));
    }
    if !(spec.mu > 0.0 && spec.l >= spec.mu) {
        return Err(Error::invalid("need 0 < mu <= L"));
    }
    for k in [spec.a_kappa, spec.c_kappa].into_iter().flatten() {
        if !(k >= 1.0) {
            return Err(Error::invalid("prescribed condition numbers must be >= 1"));
        }
    }
    if spec.p > 0 && spec.p >= spec.d {
        return Err(Error::invalid("local constraints must leave freedom: p < d"));
    }
    let xs: Vec<Vector> = (0..n).map(|_| gaussian_vector(rng, spec.d)).collect();
    let xt = gaussian_vector(rng, spec.d_tilde);
    let mut data = MixedProblemData {
        n,
        a: vec![],
        b: vec![],
        c: vec![],
        c_vec: vec![],
        c_tilde: vec![],
        c_tilde_vec: vec![],
        w,
        objective: vec![],
    };
    if spec.m > 0 && spec.d > 0 {
        data.a = match spec.a_kappa {
            Some(k) => vec![matrix_with_kappa(rng, spec.m, spec.d, k); n],
            None => (0..n).map(|_| gaussian_matrix(rng, spec.m, spec.d)).collect(),
        };
        data.b = (0..n).map(|i| &data.a[i] * &xs[i]).collect();
    }
    if spec.p > 0 {
        data.c = match spec.c_kappa {
            Some(k) => vec![matrix_with_kappa(rng, spec.p, spec.d, k); n],
            None => (0..n).map(|_| gaussian_matrix(rng, spec.p, spec.d)).collect(),
        };
        data.c_vec = (0..n).map(|i| &data.c[i] * &xs[i]).collect();
    }
    if spec.p_tilde > 0 && spec.d_tilde > 0 {
        data.c_tilde = (0..n).map(|_| gaussian_matrix(rng, spec.p_tilde, spec.d_tilde)).collect();
        data.c_tilde_vec = (0..n).map(|i| &data.c_tilde[i] * &xt).collect();
    }
    let dim = spec.d + spec.d_tilde;
    let basis = spec.common_basis.then(|| random_orthogonal(rng, dim));
    data.objective = (0..n)
        .map(|_| {
            let q_mat = match &basis {
                Some(q) => spd_with_basis(q, spec.mu, spec.l),
                None => random_spd(rng, dim, spec.mu, spec.l),
            };
            NodeObjective::Quadratic(QuadraticSpec { q_mat, q: gaussian_vector(rng, dim), mu_shift: 0.0 })
        })
        .collect();
    Ok((data, xs, xt))
}

/// Scalar nonsmooth consensus: node i holds w_i |t - c_i| + (mu/2) t^2 and all nodes
/// must agree, encoded as W t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonsmoothSpec {
    pub n: usize,
    pub mu: f64,
    /// Half-width of the box domain; required when mu > 0.
    pub radius: Option<f64>,
    pub topology: Topology,
    /// When set, W is the weighted path with this condition number and `n` is ignored.
    pub kappa_w: Option<f64>,
}

impl Default for NonsmoothSpec {
    fn default() -> Self {
        Self { n: 5, mu: 0.0, radius: None, topology: Topology::Path, kappa_w: None }
    }
}

/// Minimizer over [-radius, radius] of phi(t) = sum_i w_i |t - c_i| + (mu n / 2) t^2.
///
/// phi is piecewise quadratic, so its minimizer is a breakpoint, a box end or the
/// stationary point of one of the pieces; all candidates are compared.
pub fn weighted_median_with_ridge(centers: &[f64], weights: &[f64], mu: f64, radius: Option<f64>) -> f64 {
    let n = centers.len() as f64;
    let phi = |t: f64| -> f64 {
        centers.iter().zip(weights).map(|(c, w)| w * (t - c).abs()).sum::<f64>() + 0.5 * mu * n * t * t
    };
    let (lo, hi) = radius.map_or((f64::NEG_INFINITY, f64::INFINITY), |r| (-r, r));
    let mut candidates: Vec<f64> = centers.to_vec();
    candidates.extend(radius.map(|r| [-r, r]).into_iter().flatten());
    if mu > 0.0 {
        let mut sorted = centers.to_vec();
        sorted.sort_by(f64::total_cmp);
        // Slope of the l1 part on each open interval between breakpoints.
        for k in 0..=sorted.len() {
            let below: f64 = centers
                .iter()
                .zip(weights)
                .filter(|(c, _)| **c < sorted.get(k).copied().unwrap_or(f64::INFINITY))
                .map(|(_, w)| w)
                .sum();
            let total: f64 = weights.iter().sum();
            let slope = below - (total - below);
            candidates.push(-slope / (mu * n));
        }
    }
    candidates.into_iter().map(|t| t.clamp(lo, hi)).min_by(|a, b| phi(*a).total_cmp(&phi(*b))).unwrap_or(0.0)
}

/// Builds the nonsmooth consensus problem with its exact solution as hint.
pub fn nonsmooth_consensus<R: Rng + ?Sized>(rng: &mut R, spec: &NonsmoothSpec) -> Result<AffineProblem> {
    let w = match spec.kappa_w {
        Some(k) => network::path_for_kappa(k)?.w,
        None => network::standard_topology(spec.topology, spec.n)?.w,
    };
    let n = w.nrows();
    if !(spec.mu >= 0.0) {
        return Err(Error::invalid("mu must be nonnegative"));
    }
    if spec.mu > 0.0 && spec.radius.is_none() {
        return Err(Error::invalid("a strongly convex nonsmooth instance needs a box radius"));
    }
    let centers: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let f = WeightedL1 {
        weights: Vector::from_column_slice(&weights),
        center: Vector::from_column_slice(&centers),
        mu: spec.mu,
        domain: spec.radius.map(|r| BoxDomain::symmetric(n, r)),
    };
    let plain = kron_gossip(&w, 1)?.with_tag(Tag::W);
    let mut p = AffineProblem::new(ObjectiveOracle::new(f), plain, Vector::zeros(n))?;
    p.b_op = instrumented(&p.b_plain, &p.counters);
    let t = weighted_median_with_ridge(&centers, &weights, spec.mu, spec.radius);
    p.solution_hint = Some(Vector::from_element(n, t));
    Ok(p)
}

/// Convex, not strongly convex quadratic 0.5 u^T Q u + q^T u under B u = b.
///
/// Q has rank `rank` < `dim` and q lies in its image, so the objective is bounded below;
/// with rank + rows >= dim, Q is generically positive definite on ker B and the
/// constrained minimizer is unique. Eigenvalues of Q spread over [1, l].
pub fn random_convex_problem<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    rank: usize,
    rows: usize,
    l: f64,
) -> Result<AffineProblem> {
    if rank == 0 || rank >= dim || rows == 0 || rows >= dim {
        return Err(Error::invalid("need 0 < rank < dim and 0 < rows < dim"));
    }
    let basis = random_orthogonal(rng, dim);
    let range = basis.columns(0, rank).into_owned();
    let ev = Vector::from_fn(rank, |i, _| if rank == 1 { 1.0 } else { 1.0 + (l - 1.0) * i as f64 / (rank - 1) as f64 });
    let q_mat = &range * Matrix::from_diagonal(&ev) * range.transpose();
    let q_mat = (&q_mat + q_mat.transpose()) * 0.5;
    let q = &range * gaussian_vector(rng, rank);
    let b_mat = gaussian_matrix(rng, rows, dim);
    let b = &b_mat * gaussian_vector(rng, dim);
    let objective = super::quadratic_oracle(q_mat, q, 0.0)?;
    AffineProblem::new(objective, crate::operators::LinearOperator::dense(b_mat, Tag::Other), b)
}
