//! Gossip matrices: weighted graph Laplacians, standard topologies and the
//! weighted path that hits a prescribed condition number.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, RANK_TOL};

/// A symmetric PSD gossip matrix together with the graph it lives on.
#[derive(Clone, Debug, PartialEq)]
pub struct GossipMatrix {
    pub n: usize,
    pub w: Matrix,
    /// (i, j, weight) with i < j.
    pub edges: Vec<(usize, usize, f64)>,
}

/// Outcome of the numerical gossip-matrix checks.
#[derive(Clone, Debug, PartialEq)]
pub struct GossipCheck {
    pub symmetric: bool,
    pub psd: bool,
    pub pattern_matches: bool,
    pub kernel_dim: usize,
    /// Kernel is exactly span{1}.
    pub kernel_is_consensus: bool,
}

impl GossipCheck {
    pub fn passed(&self) -> bool {
        self.symmetric && self.psd && self.pattern_matches && self.kernel_is_consensus
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Path,
    Cycle,
    Star,
    Complete,
}

impl GossipMatrix {
    /// (lambda_max, lambda_min+) of W.
    pub fn extreme_eigenvalues(&self) -> (f64, f64) {
        linalg::psd_extreme_eigenvalues(&self.w, RANK_TOL)
    }

    /// lambda_max / lambda_min+.
    pub fn kappa(&self) -> f64 {
        let (max, min) = self.extreme_eigenvalues();
        max / min
    }

    pub fn check(&self) -> GossipCheck {
        let symmetric = linalg::asymmetry(&self.w) <= 1e-12;
        let ev = linalg::sym_eigenvalues(&self.w);
        let scale = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        let psd = ev.first().is_none_or(|&l| l >= -1e-10 * scale);
        let mut pattern_matches = true;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let (a, b) = (i.min(j), i.max(j));
                let is_edge = self.edges.iter().any(|&(p, q, _)| p == a && q == b);
                if is_edge != (self.w[(i, j)] != 0.0) {
                    pattern_matches = false;
                }
            }
        }
        let basis = linalg::nullspace_basis(&self.w, RANK_TOL);
        let kernel_dim = basis.ncols();
        let kernel_is_consensus = kernel_dim == 1 && {
            let col = basis.column(0);
            let mean = col.sum() / self.n as f64;
            col.iter().all(|&x| (x - mean).abs() <= 1e-8)
        };
        GossipCheck { symmetric, psd, pattern_matches, kernel_dim, kernel_is_consensus }
    }
}

/// Weighted Laplacian W = D - A of the given edge list.
pub fn laplacian(edges: &[(usize, usize)], weights: Option<&[f64]>, n: usize) -> Result<GossipMatrix> {
    if n == 0 {
        return Err(Error::invalid("laplacian needs n >= 1"));
    }
    if let Some(w) = weights {
        if w.len() != edges.len() {
            return Err(Error::invalid("one weight per edge required"));
        }
    }
    let mut w = Matrix::zeros(n, n);
    let mut list = Vec::with_capacity(edges.len());
    for (k, &(i, j)) in edges.iter().enumerate() {
        if i >= n || j >= n || i == j {
            return Err(Error::invalid(format!("bad edge ({i}, {j}) for n = {n}")));
        }
        let wt = weights.map_or(1.0, |ws| ws[k]);
        if !(wt > 0.0) {
            return Err(Error::invalid(format!("edge weight must be positive, got {wt}")));
        }
        w[(i, j)] -= wt;
        w[(j, i)] -= wt;
        w[(i, i)] += wt;
        w[(j, j)] += wt;
        list.push((i.min(j), i.max(j), wt));
    }
    Ok(GossipMatrix { n, w, edges: list })
}

/// Unweighted Laplacian of a named topology.
pub fn standard_topology(kind: Topology, n: usize) -> Result<GossipMatrix> {
    if n < 2 {
        return Err(Error::invalid("standard topologies need n >= 2"));
    }
    let edges: Vec<(usize, usize)> = match kind {
        Topology::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        Topology::Cycle if n == 2 => vec![(0, 1)],
        Topology::Cycle => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        Topology::Star => (1..n).map(|i| (0, i)).collect(),
        Topology::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
    };
    laplacian(&edges, None, n)
}

/// Condition number of the unweighted path on n nodes: (1 + cos(pi/n)) / (1 - cos(pi/n)).
pub fn path_kappa(n: usize) -> f64 {
    let c = (PI / n as f64).cos();
    (1.0 + c) / (1.0 - c)
}

/// Path on n nodes whose first edge has weight 1 - a.
pub fn weighted_path(n: usize, a: f64) -> Result<GossipMatrix> {
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let weights: Vec<f64> = (0..n - 1).map(|i| if i == 0 { 1.0 - a } else { 1.0 }).collect();
    laplacian(&edges, Some(&weights), n)
}

/// lambda_max over the second-smallest eigenvalue, without a rank cut-off.
fn connected_kappa(g: &GossipMatrix) -> f64 {
    let ev = linalg::sym_eigenvalues(&g.w);
    ev[ev.len() - 1] / ev[1]
}

/// Relative accuracy of [`path_for_kappa`].
pub const PATH_KAPPA_RTOL: f64 = 1e-10;

/// Upper end of the first-edge reduction used by [`path_for_kappa`].
pub const PATH_A_MAX: f64 = 1.0 - 1e-12;

/// Weighted path Laplacian with n a multiple of 3 and condition number `kappa_target`.
///
/// Picks the n = 3m with path_kappa(n) <= target < path_kappa(n + 3), then bisects the
/// first-edge reduction a until the condition number matches to 1e-10 relative.
pub fn path_for_kappa(kappa_target: f64) -> Result<GossipMatrix> {
    let floor = path_kappa(3);
    if !(kappa_target >= floor * (1.0 - 1e-12)) || !kappa_target.is_finite() {
        return Err(Error::invalid(format!("kappa_target {kappa_target} below the achievable floor {floor}")));
    }
    let mut n = 3;
    while path_kappa(n + 3) <= kappa_target {
        n += 3;
    }
    let rel = |g: &GossipMatrix| (connected_kappa(g) - kappa_target) / kappa_target;
    let g0 = weighted_path(n, 0.0)?;
    if rel(&g0).abs() <= PATH_KAPPA_RTOL {
        return Ok(g0);
    }
    let (mut lo, mut hi) = (0.0, PATH_A_MAX);
    let top = weighted_path(n, hi)?;
    if rel(&top) < 0.0 {
        return Err(Error::ConstructionInfeasible(format!(
            "kappa_target {kappa_target} not reachable with n = {n} (max {})",
            connected_kappa(&top)
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = weighted_path(n, mid)?;
        let r = rel(&g);
        if r.abs() <= PATH_KAPPA_RTOL {
            return Ok(g);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::ConstructionInfeasible(format!("bisection for kappa {kappa_target} did not converge")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_path() {
        let g = standard_topology(Topology::Path, 2).unwrap();
        assert_eq!(g.w, Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!(g.check().passed());
    }

    #[test]
    fn path_four_extremes_match_cosine_formula() {
        let g = standard_topology(Topology::Path, 4).unwrap();
        let (max, min) = g.extreme_eigenvalues();
        let c = (PI / 4.0).cos();
        assert!((max - 2.0 * (1.0 + c)).abs() < 1e-12);
        assert!((min - 2.0 * (1.0 - c)).abs() < 1e-12);
    }

    #[test]
    fn disconnected_graph_fails_check() {
        let g = laplacian(&[(0, 1), (2, 3)], None, 4).unwrap();
        let c = g.check();
        assert_eq!(c.kernel_dim, 2);
        assert!(!c.passed());
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(laplacian(&[(0, 5)], None, 3).is_err());
        assert!(laplacian(&[(0, 1)], Some(&[0.0]), 3).is_err());
        assert!(standard_topology(Topology::Star, 1).is_err());
    }

    #[test]
    fn star_and_cycle_spectra() {
        let ev = linalg::sym_eigenvalues(&standard_topology(Topology::Star, 3).unwrap().w);
        for (a, b) in ev.iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let ev = linalg::sym_eigenvalues(&standard_topology(Topology::Cycle, 4).unwrap().w);
        for (a, b) in ev.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_graph_is_perfectly_conditioned() {
        let g = standard_topology(Topology::Complete, 5).unwrap();
        let (max, min) = g.extreme_eigenvalues();
        assert!((max - 5.0).abs() < 1e-12 && (min - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reduction_gives_path_kappa() {
        let g = weighted_path(9, 0.0).unwrap();
        assert!((g.kappa() - path_kappa(9)).abs() < 1e-9 * path_kappa(9));
    }

    #[test]
    fn kappa_hundred() {
        let g = path_for_kappa(100.0).unwrap();
        assert!((g.kappa() - 100.0).abs() <= 1e-6 * 100.0);
        assert_eq!(g.n % 3, 0);
        assert!(100f64.sqrt() <= 4.0 * 2f64.sqrt() * g.n as f64);
        assert!(g.check().passed());
    }

    #[test]
    fn below_floor_rejected() {
        assert!(matches!(path_for_kappa(2.0), Err(Error::InvalidArgument(_))));
    }
}
