//! Truncated lower-bound instances built from Nesterov's tridiagonal quadratic.

use serde::{Deserialize, Serialize};

use crate::conditioning::{self, MatrixFamily};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, RANK_TOL};
use crate::network::{self, Topology};
use crate::problems::{MixedProblemData, NodeObjective, QuadraticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstKind {
    SharedLocal,
    CoupledLocal,
}

/// Targets of a worst-case instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorstInstanceSpec {
    pub kind: WorstKind,
    pub kappa_f: f64,
    pub kappa_c: f64,
    /// Projected condition number target (coupled case only).
    pub kappa_a: Option<f64>,
    /// Gossip condition number; when absent an unweighted path on `n` nodes is used.
    pub kappa_w: Option<f64>,
    pub truncation: usize,
    pub n: usize,
}

impl Default for WorstInstanceSpec {
    fn default() -> Self {
        Self {
            kind: WorstKind::SharedLocal,
            kappa_f: 10.0,
            kappa_c: 15.0,
            kappa_a: None,
            kappa_w: None,
            truncation: 64,
            n: 3,
        }
    }
}

impl WorstInstanceSpec {
    fn validate(&self) -> Result<()> {
        if self.truncation < 4 {
            return Err(Error::invalid("truncation must be at least 4"));
        }
        if self.kappa_w.is_none() && (self.n == 0 || !self.n.is_multiple_of(3)) {
            return Err(Error::invalid(format!("n must be a positive multiple of 3, got {}", self.n)));
        }
        for (name, k) in [
            ("kappa_f", Some(self.kappa_f)),
            ("kappa_c", Some(self.kappa_c)),
            ("kappa_a", self.kappa_a),
            ("kappa_w", self.kappa_w),
        ] {
            if let Some(k) = k {
                if !(k >= 1.0) || !k.is_finite() {
                    return Err(Error::invalid(format!("{name} must be >= 1, got {k}")));
                }
            }
        }
        Ok(())
    }

    fn gossip(&self) -> Result<Matrix> {
        Ok(match self.kappa_w {
            Some(k) => network::path_for_kappa(k)?.w,
            None => network::standard_topology(Topology::Path, self.n)?.w,
        })
    }
}

/// A generated instance with its construction constants and measurements.
#[derive(Clone, Debug)]
pub struct WorstInstance {
    pub data: MixedProblemData,
    /// L' and mu' used in the split constraint blocks.
    pub l_prime: f64,
    pub mu_prime: f64,
    /// Product whose Nesterov ratio governs the solution: z*_k = rho^k.
    pub kappa_product: f64,
    pub rho: f64,
    /// (name, target, measured) triples.
    pub measurements: Vec<(String, f64, f64)>,
}

impl WorstInstance {
    pub fn measured(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.0 == name).map(|m| m.2)
    }
}

/// E (T x T, 1 on the diagonal, -1 below it) and M = E^T E.
pub fn nesterov_tridiagonal(t: usize) -> Result<(Matrix, Matrix)> {
    if t < 2 {
        return Err(Error::invalid("truncation must be at least 2"));
    }
    let e = Matrix::from_fn(t, t, |i, j| {
        if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        }
    });
    let m = e.transpose() * &e;
    Ok((m, e))
}

/// Rows of `m` at the given parity (0 keeps rows 1, 3, ... counted from one), others zeroed.
pub fn keep_rows(m: &Matrix, parity: usize) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| if i % 2 == parity { m[(i, j)] } else { 0.0 })
}

/// (sqrt(2P/3 + 1) - 1) / (sqrt(2P/3 + 1) + 1).
pub fn nesterov_rho(kappa_product: f64) -> f64 {
    let s = (2.0 / 3.0 * kappa_product + 1.0).sqrt();
    (s - 1.0) / (s + 1.0)
}

/// (rho^1, ..., rho^T).
pub fn nesterov_dual_solution(kappa_product: f64, t: usize) -> Result<Vector> {
    if !(kappa_product >= 1.0) {
        return Err(Error::invalid(format!("kappa_product must be >= 1, got {kappa_product}")));
    }
    let rho = nesterov_rho(kappa_product);
    Ok(Vector::from_fn(t, |k, _| rho.powi(k as i32 + 1)))
}

/// The truncated dual system (M_T + c I) z = e_1 with c = 6 / P, whose
/// untruncated solution is exactly rho^k.
pub fn nesterov_dual_system(kappa_product: f64, t: usize) -> Result<(Matrix, Vector)> {
    if !(kappa_product >= 1.0) {
        return Err(Error::invalid(format!("kappa_product must be >= 1, got {kappa_product}")));
    }
    let (m, _) = nesterov_tridiagonal(t)?;
    let c = 6.0 / kappa_product;
    let mut e1 = Vector::zeros(t);
    e1[0] = 1.0;
    Ok((m + Matrix::identity(t, t) * c, e1))
}

fn check(measurements: &[(String, f64, f64)], tol: f64) -> Result<()> {
    for (name, target, got) in measurements {
        if (got - target).abs() > tol * target.abs().max(1.0) {
            return Err(Error::ConstructionInfeasible(format!(
                "{name}: target {target}, measured {got} (tolerance {tol:e})"
            )));
        }
    }
    Ok(())
}

/// Shared-variable instance: identical f(p, t) = (1/2)|p|^2 + (kappa_f/2)|t + L' e_1|^2 and
/// C~_i holding the odd (V_1) or even (V_3) rows of (sqrt(L') E^T, sqrt(mu') I), zero on V_2.
///
/// L' and mu' are calibrated so that max_i lambda_max(C_i^T C_i) = kappa_c and
/// lambda_min+((1/n) sum C_i^T C_i) = 1 hold exactly at truncation T.
pub fn build_worst_shared(spec: &WorstInstanceSpec) -> Result<WorstInstance> {
    spec.validate()?;
    let t = spec.truncation;
    let (m_t, e) = nesterov_tridiagonal(t)?;
    let lambda_t = linalg::sym_eigenvalues(&m_t)[0];
    let (l_c, mu_c) = (spec.kappa_c, 1.0);
    let l_prime = (l_c - 3.0 * mu_c) / (2.0 - lambda_t);
    let mu_prime = l_c - 2.0 * l_prime;
    if !(l_prime > 0.0 && mu_prime > 0.0) {
        return Err(Error::ConstructionInfeasible(format!(
            "kappa_c = {l_c} not reachable at truncation {t}: L' = {l_prime}, mu' = {mu_prime}"
        )));
    }
    let w = spec.gossip()?;
    let n = w.nrows();
    if n % 3 != 0 {
        return Err(Error::invalid("node count must be a multiple of 3"));
    }
    let et = e.transpose();
    let full = linalg::hstack(&[et * l_prime.sqrt(), Matrix::identity(t, t) * mu_prime.sqrt()]);
    let c1 = keep_rows(&full, 0);
    let c3 = keep_rows(&full, 1);
    let c_tilde: Vec<Matrix> = (0..n)
        .map(|i| match i * 3 / n {
            0 => c1.clone(),
            1 => Matrix::zeros(t, 2 * t),
            _ => c3.clone(),
        })
        .collect();

    let (mu_f, l_f) = (1.0, spec.kappa_f);
    let shift = l_prime / mu_f;
    let q_mat = Matrix::from_diagonal(&Vector::from_fn(2 * t, |i, _| if i < t { mu_f } else { l_f }));
    let mut q = Vector::zeros(2 * t);
    q[t] = l_f * shift;
    let objective = (0..n)
        .map(|_| NodeObjective::Quadratic(QuadraticSpec { q_mat: q_mat.clone(), q: q.clone(), mu_shift: 0.0 }))
        .collect();
    let data = MixedProblemData {
        n,
        a: vec![],
        b: vec![],
        c: vec![],
        c_vec: vec![],
        c_tilde_vec: vec![Vector::zeros(t); n],
        c_tilde,
        w,
        objective,
    };

    let kappa_product = 6.0 * l_prime * l_f / (mu_prime * mu_f);
    let rho = nesterov_rho(kappa_product);
    let fam = MatrixFamily::new(data.c_tilde.clone())?;
    let l_meas = fam.max_block_sigma_sq();
    let s = data.c_tilde.iter().fold(Matrix::zeros(2 * t, 2 * t), |acc, c| acc + c.transpose() * c) / n as f64;
    let mu_meas = linalg::psd_extreme_eigenvalues(&s, RANK_TOL).1;
    let mut measurements = vec![
        ("L_C".to_string(), l_c, l_meas),
        ("mu_C".to_string(), mu_c, mu_meas),
        ("kappa_C".to_string(), spec.kappa_c, l_meas / mu_meas),
    ];
    if let Some(kw) = spec.kappa_w {
        let (max, min) = linalg::psd_extreme_eigenvalues(&data.w, RANK_TOL);
        measurements.push(("kappa_W".into(), kw, max / min));
    }
    check(&measurements, rho.powi(t as i32).max(1e-9))?;
    Ok(WorstInstance { data, l_prime, mu_prime, kappa_product, rho, measurements })
}

/// Rows at the given parity of the bidiagonal pair split used by the coupled instance:
/// parity 0 gives rows e_1, e_2 - e_3, 0, e_4 - e_5, ...; parity 1 gives e_1 - e_2, 0, e_3 - e_4, ...
pub fn coupled_split(t: usize, parity: usize) -> Matrix {
    let mut m = Matrix::zeros(t, t);
    for k in 0..t {
        let pair = if parity == 0 { k % 2 == 1 } else { k % 2 == 0 };
        if parity == 0 && k == 0 {
            m[(0, 0)] = 1.0;
        } else if pair {
            m[(k, k)] = 1.0;
            if k + 1 < t {
                m[(k, k + 1)] = -1.0;
            }
        }
    }
    m
}

/// Coupled plus local instance on n nodes, each holding l blocks of (p, t) in R^T.
///
/// C_i = diag(sqrt(W_C) x I, sqrt(W_C) x I) forces within-node consensus, and A_i
/// places (sqrt(L') E_k^T, sqrt(mu') I) on the blocks of U_1 (nodes of V_1) or U_3 (V_3),
/// with mu~_AC = 1 and L_A = kappa_a.
pub fn build_worst_coupled_local(spec: &WorstInstanceSpec) -> Result<WorstInstance> {
    spec.validate()?;
    let kappa_a = spec.kappa_a.ok_or_else(|| Error::invalid("coupled instance needs kappa_a"))?;
    let t = spec.truncation;
    let l_prime = 0.5 * kappa_a - 4.5;
    let mu_prime: f64 = 9.0;
    if !(l_prime > 0.0) {
        return Err(Error::ConstructionInfeasible(format!("kappa_a = {kappa_a} must exceed 9")));
    }
    let w = spec.gossip()?;
    let n = w.nrows();
    let w_c = network::path_for_kappa(spec.kappa_c)?.w;
    let l = w_c.nrows();
    let root = linalg::kron_identity(&linalg::psd_sqrt(&w_c), t);
    let c_i = linalg::block_diag(&[root.clone(), root]);
    let bar = |parity| {
        linalg::hstack(&[
            coupled_split(t, parity).transpose() * l_prime.sqrt(),
            Matrix::identity(t, t) * mu_prime.sqrt(),
        ])
    };
    let bars = [bar(0), bar(1)];
    let lt = l * t;
    let a_for = |group: usize| -> Matrix {
        let mut a = Matrix::zeros(lt, 2 * lt);
        if group == 1 {
            return a;
        }
        let b = &bars[group / 2];
        for j in 0..l {
            if j * 3 / l != group {
                continue;
            }
            a.view_mut((j * t, j * t), (t, t)).copy_from(&b.columns(0, t));
            a.view_mut((j * t, lt + j * t), (t, t)).copy_from(&b.columns(t, t));
        }
        a
    };
    let a: Vec<Matrix> = (0..n).map(|i| a_for(i * 3 / n)).collect();

    let (mu_f, l_f) = (1.0, spec.kappa_f);
    let lf = l as f64;
    let q_mat = Matrix::from_diagonal(&Vector::from_fn(2 * lt, |i, _| if i < lt { mu_f / lf } else { l_f / lf }));
    let mut q = Vector::zeros(2 * lt);
    for j in 0..l {
        q[j * t] = l_prime.sqrt() / (2.0 * lf);
    }
    let data = MixedProblemData {
        n,
        b: vec![Vector::zeros(lt); n],
        a,
        c: vec![c_i; n],
        c_vec: vec![Vector::zeros(2 * lt); n],
        c_tilde: vec![],
        c_tilde_vec: vec![],
        w,
        objective: (0..n)
            .map(|_| NodeObjective::Quadratic(QuadraticSpec { q_mat: q_mat.clone(), q: q.clone(), mu_shift: 0.0 }))
            .collect(),
    };

    let a_fam = MatrixFamily::new(data.a.clone())?;
    let c_fam = MatrixFamily::new(data.c.clone())?;
    let (mu_tilde, _) = conditioning::projected_condition_number(&a_fam, &c_fam)?;
    let l_a = a_fam.max_block_sigma_sq();
    let c_bounds = linalg::sigma_bounds(&data.c[0], RANK_TOL);
    let mut measurements = vec![
        ("mu_tilde_AC".to_string(), 1.0, mu_tilde),
        ("L_A".to_string(), kappa_a, l_a),
        ("kappa_C".to_string(), spec.kappa_c, c_bounds.0 / c_bounds.1),
    ];
    if let Some(kw) = spec.kappa_w {
        let (max, min) = linalg::psd_extreme_eigenvalues(&data.w, RANK_TOL);
        measurements.push(("kappa_W".into(), kw, max / min));
    }
    check(&measurements, 1e-6)?;
    let kappa_product = kappa_a * spec.kappa_f;
    Ok(WorstInstance { data, l_prime, mu_prime, kappa_product, rho: nesterov_rho(kappa_product), measurements })
}

/// Dispatches on `spec.kind`.
pub fn build_worst(spec: &WorstInstanceSpec) -> Result<WorstInstance> {
    match spec.kind {
        WorstKind::SharedLocal => build_worst_shared(spec),
        WorstKind::CoupledLocal => build_worst_coupled_local(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_two() {
        let (m, e) = nesterov_tridiagonal(2).unwrap();
        assert_eq!(e, Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert!(nesterov_tridiagonal(1).is_err());
    }

    #[test]
    fn row_split_recombines() {
        let (_, e) = nesterov_tridiagonal(7).unwrap();
        let et = e.transpose();
        assert_eq!(keep_rows(&et, 0) + keep_rows(&et, 1), et);
        assert_eq!(keep_rows(&et, 0).row(1).sum(), 0.0);
    }

    #[test]
    fn rho_plugs() {
        assert!((nesterov_rho(4.5) - 1.0 / 3.0).abs() < 1e-15);
        let s = (5.0f64 / 3.0).sqrt();
        assert!((nesterov_rho(1.0) - (s - 1.0) / (s + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn truncated_dual_matches_geometric_solution() {
        for p in [1.0, 4.5, 120.0] {
            let t = 40;
            let (h, e1) = nesterov_dual_system(p, t).unwrap();
            let z = h.lu().solve(&e1).unwrap();
            let expect = nesterov_dual_solution(p, t).unwrap();
            let tail = nesterov_rho(p).powi(t as i32);
            assert!((z - expect).amax() <= tail + 1e-14);
        }
    }

    #[test]
    fn coupled_split_sums_to_m() {
        let t = 6;
        let (m, _) = nesterov_tridiagonal(t).unwrap();
        let e1 = coupled_split(t, 0);
        let e2 = coupled_split(t, 1);
        let s = e1.transpose() * &e1 + e2.transpose() * &e2;
        // Matches M = E^T E away from the truncated last row.
        for i in 0..t - 1 {
            for j in 0..t - 1 {
                assert_eq!(s[(i, j)], m[(i, j)]);
            }
        }
    }
}
