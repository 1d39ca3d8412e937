//! Problem data and the builders that bring coupled, local and shared-variable
//! constraints to the canonical form `min G(u) s.t. B u = b`.

pub mod generate;
mod objective;

use std::ops::Range;
use std::sync::Arc;

pub use objective::{
    penalize, penalize_with_bound, quadratic_oracle, regularize, BoxDomain, Constants, Objective, ObjectiveOracle,
    Quadratic, SumOfParts, WeightedL1,
};

use crate::conditioning::{self, MatrixFamily, ScalingCoefficients};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, RANK_TOL};
use crate::operators::{self, instrumented, CounterSet, LinearOperator, SpectralBounds, Tag};

/// Relative least-squares residual above which loaded constraints count as inconsistent.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Serializable quadratic node objective 0.5 x^T Q x + q^T x + (mu_shift/2)|x|^2.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSpec {
    pub q_mat: Matrix,
    pub q: Vector,
    pub mu_shift: f64,
}

/// Objective of one node over its concatenated (x_i, x~) variables.
#[derive(Clone, Debug)]
pub enum NodeObjective {
    Quadratic(QuadraticSpec),
    Oracle(ObjectiveOracle),
}

impl NodeObjective {
    pub fn oracle(&self) -> Result<ObjectiveOracle> {
        match self {
            NodeObjective::Quadratic(s) => quadratic_oracle(s.q_mat.clone(), s.q.clone(), s.mu_shift),
            NodeObjective::Oracle(o) => Ok(o.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NodeObjective::Quadratic(s) => s.q.len(),
            NodeObjective::Oracle(o) => o.dim(),
        }
    }
}

/// Data of the general problem
/// min sum_i f_i(x_i, x~) s.t. sum_i (A_i x_i - b_i) = 0, C_i x_i = c_i, C~_i x~ = c~_i.
///
/// An empty vector means the constraint group is absent.
#[derive(Clone, Debug)]
pub struct MixedProblemData {
    pub n: usize,
    pub a: Vec<Matrix>,
    pub b: Vec<Vector>,
    pub c: Vec<Matrix>,
    pub c_vec: Vec<Vector>,
    pub c_tilde: Vec<Matrix>,
    pub c_tilde_vec: Vec<Vector>,
    pub w: Matrix,
    pub objective: Vec<NodeObjective>,
}

/// Variable dimensions of a [`MixedProblemData`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dims {
    /// Per-node local dimension d_i.
    pub d: Vec<usize>,
    /// Shared dimension.
    pub d_tilde: usize,
    /// Row dimension of the coupled constraints (0 when absent).
    pub m: usize,
}

impl MixedProblemData {
    pub fn has_coupled(&self) -> bool {
        !self.a.is_empty()
    }

    /// Local constraints present and not identically zero.
    pub fn has_local(&self) -> bool {
        !self.c.is_empty() && self.c.iter().any(|c| c.iter().any(|&v| v != 0.0))
    }

    pub fn has_shared(&self) -> bool {
        !self.c_tilde.is_empty()
    }

    pub fn dims(&self) -> Result<Dims> {
        let n = self.n;
        if n == 0 {
            return Err(Error::invalid("problem needs at least one node"));
        }
        if self.w.nrows() != n || self.w.ncols() != n {
            return Err(Error::invalid("W must be n x n"));
        }
        if self.objective.len() != n {
            return Err(Error::invalid("one objective per node required"));
        }
        for (name, len) in [
            ("A", self.a.len()),
            ("b", self.b.len()),
            ("C", self.c.len()),
            ("c", self.c_vec.len()),
            ("C_tilde", self.c_tilde.len()),
            ("c_tilde", self.c_tilde_vec.len()),
        ] {
            if len != 0 && len != n {
                return Err(Error::invalid(format!("{name} must have 0 or n = {n} entries, got {len}")));
            }
        }
        if self.a.len() != self.b.len()
            || self.c.len() != self.c_vec.len()
            || self.c_tilde.len() != self.c_tilde_vec.len()
        {
            return Err(Error::invalid("constraint matrices and right-hand sides must come in pairs"));
        }
        let d: Vec<usize> = (0..n)
            .map(|i| {
                if self.has_coupled() {
                    self.a[i].ncols()
                } else if !self.c.is_empty() {
                    self.c[i].ncols()
                } else {
                    0
                }
            })
            .collect();
        let d_tilde = self.objective[0].dim().checked_sub(d[0]).ok_or_else(|| Error::invalid("objective too small"))?;
        for i in 0..n {
            if self.objective[i].dim() != d[i] + d_tilde {
                return Err(Error::invalid(format!("node {i}: objective dimension disagrees with constraints")));
            }
            if !self.c.is_empty() && self.c[i].ncols() != d[i] {
                return Err(Error::invalid(format!("node {i}: C_i and A_i column counts differ")));
            }
            if !self.c.is_empty() && self.c[i].nrows() != self.c_vec[i].len() {
                return Err(Error::invalid(format!("node {i}: c_i length mismatch")));
            }
            if self.has_shared()
                && (self.c_tilde[i].ncols() != d_tilde || self.c_tilde[i].nrows() != self.c_tilde_vec[i].len())
            {
                return Err(Error::invalid(format!("node {i}: C~_i shape mismatch")));
            }
        }
        let m = if self.has_coupled() { self.a[0].nrows() } else { 0 };
        if self.has_coupled() && (0..n).any(|i| self.a[i].nrows() != m || self.b[i].len() != m) {
            return Err(Error::invalid("coupled blocks must share the row dimension"));
        }
        Ok(Dims { d, d_tilde, m })
    }

    /// Least-squares residuals of the x-system (coupled and local rows together) and
    /// of the x~-system (every node's C~_i x~ = c~_i at once).
    pub fn feasibility_residuals(&self) -> Result<(f64, f64)> {
        let dims = self.dims()?;
        let x_len: usize = dims.d.iter().sum();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        if self.has_coupled() {
            rows.push(linalg::hstack(&self.a));
            rhs.push(self.b.iter().fold(Vector::zeros(dims.m), |acc, b| acc + b));
        }
        if !self.c.is_empty() {
            rows.push(linalg::block_diag(&self.c));
            rhs.push(stack_vectors(&self.c_vec));
        }
        let x_res = if rows.is_empty() || x_len == 0 {
            rhs.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
        } else {
            let rhs = stack_vectors(&rhs);
            linalg::lstsq_residual(&linalg::vstack(&rows), &rhs) / (1.0 + rhs.norm())
        };
        let xt_res = if self.has_shared() {
            let rhs = stack_vectors(&self.c_tilde_vec);
            if dims.d_tilde == 0 {
                rhs.norm()
            } else {
                linalg::lstsq_residual(&linalg::vstack(&self.c_tilde), &rhs) / (1.0 + rhs.norm())
            }
        } else {
            0.0
        };
        Ok((x_res, xt_res))
    }

    /// Fails with [`Error::Infeasible`] when either system has relative residual above 1e-8.
    pub fn check_feasible(&self) -> Result<()> {
        let (x_res, xt_res) = self.feasibility_residuals()?;
        if x_res > FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!("coupled/local constraints inconsistent (residual {x_res:e})")));
        }
        if xt_res > FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!("shared constraints inconsistent (residual {xt_res:e})")));
        }
        Ok(())
    }

    /// Per-node (mu_i, L_i) lower/upper envelope: (min mu_i, max L_i).
    pub fn objective_constants(&self) -> Result<(f64, Option<f64>)> {
        let mut mu = f64::INFINITY;
        let mut l = Some(0.0f64);
        for f in &self.objective {
            let c = f.oracle()?.constants();
            mu = mu.min(c.mu);
            l = l.zip(c.l).map(|(a, b)| a.max(b));
        }
        Ok((mu, l))
    }
}

/// Where each variable group sits in the canonical vector z = (x, y, x~ copies).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub x: Vec<Range<usize>>,
    pub y: Option<Range<usize>>,
    /// Row dimension m of the auxiliary variable blocks.
    pub m: usize,
    pub x_tilde: Vec<Range<usize>>,
    pub dim: usize,
}

impl Layout {
    fn new(dims: &Dims, with_y: bool) -> Self {
        let n = dims.d.len();
        let mut off = 0;
        let x = dims
            .d
            .iter()
            .map(|&di| {
                let r = off..off + di;
                off += di;
                r
            })
            .collect();
        let y = with_y.then(|| {
            let r = off..off + n * dims.m;
            off += n * dims.m;
            r
        });
        let x_tilde = (0..n)
            .map(|_| {
                let r = off..off + dims.d_tilde;
                off += dims.d_tilde;
                r
            })
            .collect();
        Layout { x, y, m: dims.m, x_tilde, dim: off }
    }

    pub fn x_len(&self) -> usize {
        self.x.last().map_or(0, |r| r.end)
    }

    pub fn x_tilde_len(&self) -> usize {
        self.x_tilde.iter().map(|r| r.len()).sum()
    }

    pub fn x_part(&self, z: &Vector, i: usize) -> Vector {
        z.rows(self.x[i].start, self.x[i].len()).into_owned()
    }

    pub fn x_tilde_part(&self, z: &Vector, i: usize) -> Vector {
        z.rows(self.x_tilde[i].start, self.x_tilde[i].len()).into_owned()
    }

    pub fn y_part(&self, z: &Vector) -> Option<Vector> {
        self.y.as_ref().map(|r| z.rows(r.start, r.len()).into_owned())
    }

    /// Orthonormal basis of R^d x Y x R^{n d~}, where Y holds zero-sum y blocks.
    pub fn search_space_basis(&self) -> Matrix {
        let Some(yr) = &self.y else {
            return Matrix::identity(self.dim, self.dim);
        };
        let n = self.x.len();
        let m = self.m;
        let sum = Matrix::from_fn(m, n * m, |r, c| if c % m == r { 1.0 } else { 0.0 });
        let ybasis = linalg::nullspace_basis(&sum, RANK_TOL);
        let k = ybasis.ncols();
        let other = self.dim - yr.len();
        let mut t = Matrix::zeros(self.dim, other + k);
        let mut col = 0;
        for i in 0..self.dim {
            if !yr.contains(&i) {
                t[(i, col)] = 1.0;
                col += 1;
            }
        }
        t.view_mut((yr.start, other), (yr.len(), k)).copy_from(&ybasis);
        t
    }
}

/// Which reformulation produced a problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Consensus,
    Shared,
    Coupled,
    CoupledLocal,
    Mixed,
    Generic,
}

/// Options of the reformulation builders.
#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Replace W by a Chebyshev polynomial P(W) with O(1) condition number.
    pub chebyshev_gossip: bool,
    /// Replace C by P(C^T C) with O(1) condition number.
    pub chebyshev_local: bool,
    pub counters: Option<Arc<CounterSet>>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { chebyshev_gossip: true, chebyshev_local: true, counters: None }
    }
}

/// Quantities measured while building a problem.
#[derive(Clone, Debug, Default)]
pub struct BuildInfo {
    pub scaling_alpha_sq: Option<f64>,
    pub scaling_beta_sq: Option<f64>,
    pub scaling_gamma_sq: Option<f64>,
    pub penalty_r: Option<f64>,
    /// Squared singular-value bounds of the gossip part actually used.
    pub gossip_bounds: Option<SpectralBounds>,
    /// Number of W applies per gossip-part apply.
    pub gossip_degree: usize,
    /// Number of C applies (forward, and again adjoint) per local-part apply.
    pub local_degree: usize,
    /// Exact spectral bounds of the assembled B.
    pub b_bounds: Option<SpectralBounds>,
    pub mu_f: f64,
    pub l_f: Option<f64>,
}

/// min G(u) s.t. B u = b.
///
/// `b_op` charges its leaf multiplications (A, C, C~, W) to `counters`; solvers add
/// the top-level B count themselves. `b_plain` is an uncounted twin for analysis.
#[derive(Clone, Debug)]
pub struct AffineProblem {
    pub objective: ObjectiveOracle,
    pub b_op: LinearOperator,
    /// Same operator without counters.
    pub b_plain: LinearOperator,
    pub b: Vector,
    pub solution_hint: Option<Vector>,
    pub layout: Layout,
    pub counters: Arc<CounterSet>,
    pub kind: ProblemKind,
    pub info: BuildInfo,
}

impl AffineProblem {
    /// A problem from an objective, an operator and a right-hand side.
    pub fn new(objective: ObjectiveOracle, b_op: LinearOperator, b: Vector) -> Result<Self> {
        if b_op.cols() != objective.dim() || b_op.rows() != b.len() {
            return Err(Error::invalid("problem dimensions disagree"));
        }
        let dim = objective.dim();
        let counters = CounterSet::new();
        Ok(Self {
            objective,
            b_op: b_op.clone(),
            b_plain: b_op,
            b,
            solution_hint: None,
            layout: Layout { x: vec![0..dim], y: None, m: 0, x_tilde: vec![], dim },
            counters,
            kind: ProblemKind::Generic,
            info: BuildInfo::default(),
        })
    }

    /// Exact spectral bounds of B (dense SVD of the uncounted twin).
    pub fn spectral_bounds(&self) -> Result<SpectralBounds> {
        match self.info.b_bounds {
            Some(b) => Ok(b),
            None => operators::spectral_bounds(&self.b_plain),
        }
    }

    /// Constraint residual |B u - b| computed without touching the counters.
    pub fn residual(&self, u: &Vector) -> f64 {
        (self.b_plain.apply(u) - &self.b).norm()
    }

    /// Sets `solution_hint` from [`Self::dense_solution`].
    pub fn with_dense_hint(mut self) -> Result<Self> {
        self.solution_hint = Some(self.dense_solution()?);
        Ok(self)
    }

    /// Dense minimizer over R^d x Y x R^{n d~} for quadratic objectives.
    pub fn dense_solution(&self) -> Result<Vector> {
        let (h, g, _) = self
            .objective
            .quadratic_form()
            .ok_or_else(|| Error::invalid("dense solution needs a quadratic objective"))?;
        let bm = self.b_plain.to_dense_capped(operators::DEFAULT_DENSE_CAP)?;
        let t = self.layout.search_space_basis();
        let w = linalg::solve_equality_qp(&(t.transpose() * &h * &t), &(t.transpose() * g), &(&bm * &t), &self.b)?;
        Ok(t * w)
    }

    /// The same problem with B replaced by its Chebyshev polynomial K = P(B^T B).
    pub fn chebyshev_preconditioned(&self) -> Result<Self> {
        let bounds = self.spectral_bounds()?;
        let (k_plain, b_prime) = conditioning::chebyshev_operator(&self.b_plain, &self.b, bounds);
        let (k_inner, _) = conditioning::chebyshev_operator(&self.b_op, &self.b, bounds);
        let mut out = self.clone();
        out.b_plain = k_plain;
        out.b_op = k_inner;
        out.b = b_prime;
        out.info.b_bounds = None;
        Ok(out)
    }
}

fn dense_bounds(m: &Matrix) -> SpectralBounds {
    let (max, min) = linalg::sigma_bounds(m, RANK_TOL);
    SpectralBounds { sigma_max_sq: max, sigma_min_plus_sq: min }
}

/// Builds operator leaves either plain or charged to a counter set.
struct Leaves<'a> {
    counters: Option<&'a Arc<CounterSet>>,
}

impl Leaves<'_> {
    fn leaf(&self, op: LinearOperator) -> LinearOperator {
        match self.counters {
            Some(c) => instrumented(&op, c),
            None => op,
        }
    }
}

/// Gossip part W (or P(W)) lifted to blocks of size `block`.
struct Gossip {
    w: Matrix,
    eig: SpectralBounds,
    chebyshev: bool,
}

impl Gossip {
    fn new(w: &Matrix, chebyshev: bool) -> Result<Self> {
        let (lmax, lmin) = linalg::psd_extreme_eigenvalues(w, RANK_TOL);
        if lmin <= 0.0 {
            return Err(Error::invalid("gossip matrix has no positive spectrum"));
        }
        Ok(Self { w: w.clone(), eig: SpectralBounds { sigma_max_sq: lmax, sigma_min_plus_sq: lmin }, chebyshev })
    }

    fn degree(&self) -> usize {
        if self.chebyshev {
            conditioning::chebyshev_degree(self.eig)
        } else {
            1
        }
    }

    fn op(&self, leaves: &Leaves, block: usize) -> Result<LinearOperator> {
        let base = leaves.leaf(operators::kron_gossip(&self.w, block)?);
        Ok(if self.chebyshev { conditioning::chebyshev_psd_operator(&base, self.eig) } else { base })
    }

    /// Squared singular-value bounds of the operator returned by `op`.
    fn sigma_bounds(&self) -> Result<SpectralBounds> {
        if self.chebyshev {
            let p = self.op(&Leaves { counters: None }, 1)?.to_dense();
            Ok(dense_bounds(&p))
        } else {
            Ok(SpectralBounds {
                sigma_max_sq: self.eig.sigma_max_sq.powi(2),
                sigma_min_plus_sq: self.eig.sigma_min_plus_sq.powi(2),
            })
        }
    }
}

fn family(blocks: &[Matrix]) -> Result<MatrixFamily> {
    MatrixFamily::new(blocks.to_vec())
}

fn block_diag_dense_op(blocks: &[Matrix], tag: Tag) -> Result<LinearOperator> {
    let ops: Vec<LinearOperator> = blocks.iter().map(|b| LinearOperator::dense(b.clone(), tag)).collect();
    Ok(operators::block_diag(&ops)?.with_tag(tag))
}

fn stack_vectors(vs: &[Vector]) -> Vector {
    let len = vs.iter().map(|v| v.len()).sum();
    Vector::from_iterator(len, vs.iter().flat_map(|v| v.iter().copied()))
}

/// Assembles the canonical problem for every combination of constraint groups.
fn build_general(data: &MixedProblemData, opts: &BuildOptions, kind: ProblemKind) -> Result<AffineProblem> {
    let dims = data.dims()?;
    let n = data.n;
    let has_x = dims.d.iter().any(|&d| d > 0);
    let coupled = data.has_coupled();
    let local = data.has_local();
    let has_tilde = dims.d_tilde > 0;
    let layout = Layout::new(&dims, coupled);
    data.check_feasible()?;
    let gossip = Gossip::new(&data.w, opts.chebyshev_gossip)?;
    let w_bounds = gossip.sigma_bounds()?;
    let (mu_f, l_f) = data.objective_constants()?;

    let mut info = BuildInfo {
        gossip_bounds: Some(w_bounds),
        gossip_degree: gossip.degree(),
        local_degree: 0,
        mu_f,
        l_f,
        ..Default::default()
    };

    // Local part: C or P(C^T C), its right-hand side and squared singular-value bounds.
    let local_part = if local {
        let c_dense = linalg::block_diag(&data.c);
        let c_vec = stack_vectors(&data.c_vec);
        let c_bounds = dense_bounds(&c_dense);
        let c_plain = block_diag_dense_op(&data.c, Tag::C)?;
        if opts.chebyshev_local {
            let (k_plain, c_prime) = conditioning::chebyshev_operator(&c_plain, &c_vec, c_bounds);
            info.local_degree = conditioning::chebyshev_degree(c_bounds);
            Some((c_plain, Some(c_bounds), c_prime, dense_bounds(&k_plain.to_dense())))
        } else {
            info.local_degree = 1;
            Some((c_plain, None, c_vec, c_bounds))
        }
    } else {
        None
    };

    // Scaling coefficients.
    let (mut alpha, mut beta, mut gamma) = (1.0, 1.0, 1.0);
    let mut a_bounds = None;
    if coupled {
        let a_fam = family(&data.a)?;
        let a_dense = linalg::block_diag(&data.a);
        let ab = dense_bounds(&a_dense);
        a_bounds = Some(ab);
        match &local_part {
            None => {
                let s_a = conditioning::interaction_min_plus(&a_fam)?;
                let b2 = conditioning::coupled_scaling(ab, s_a, w_bounds)?;
                alpha = b2.sqrt();
                info.scaling_alpha_sq = Some(b2);
            }
            Some((_, _, _, c_used)) => {
                let c_fam = family(&data.c)?;
                let (mu_tilde, _) = conditioning::projected_condition_number(&a_fam, &c_fam)?;
                let l_s = linalg::sigma_bounds(&a_fam.hstack()?, RANK_TOL).0 / n as f64;
                let s: ScalingCoefficients = conditioning::mixed_scaling(ab, mu_tilde, l_s, *c_used, w_bounds)?;
                alpha = s.alpha_sq.sqrt();
                beta = s.beta_sq.sqrt();
                info.scaling_alpha_sq = Some(s.alpha_sq);
                info.scaling_beta_sq = Some(s.beta_sq);
            }
        }
    }
    if has_tilde && data.has_shared() {
        let g2 = conditioning::shared_scaling(&family(&data.c_tilde)?, w_bounds)?;
        gamma = g2.sqrt();
        info.scaling_gamma_sq = Some(g2);
    }

    let assemble = |leaves: &Leaves| -> Result<(LinearOperator, Vector, Option<LinearOperator>)> {
        let mut row_ops: Vec<Vec<Option<LinearOperator>>> = Vec::new();
        let mut rhs: Vec<Vector> = Vec::new();
        let mut pen: Option<LinearOperator> = None;
        let x_len = layout.x_len();
        let y_len = layout.y.as_ref().map_or(0, |r| r.len());
        let xt_len = layout.x_tilde_len();
        if coupled {
            let a_op = per_block_leaves(&data.a, Tag::A, leaves).expect("coupled blocks present");
            let wy = gossip.op(leaves, dims.m)?.scaled(alpha);
            let mut row = vec![Some(a_op), Some(wy)];
            if has_tilde {
                row.push(Some(LinearOperator::zeros(n * dims.m, xt_len)));
            }
            let scales = vec![vec![1.0; row.len()]];
            let first = operators::block_stack(&[row.clone()], &scales)?;
            pen = Some(first);
            row_ops.push(row);
            rhs.push(stack_vectors(&data.b));
        }
        if let Some((c_plain, c_cheb_bounds, c_prime, _)) = &local_part {
            let c_leaf = leaves.leaf(c_plain.clone());
            let c_used = match c_cheb_bounds {
                Some(bounds) => conditioning::chebyshev_operator(&c_leaf, &Vector::zeros(c_leaf.rows()), *bounds).0,
                None => c_leaf,
            };
            let rows = c_used.rows();
            let mut row = vec![Some(c_used.scaled(beta))];
            if coupled {
                row.push(None);
            }
            if has_tilde {
                row.push(Some(LinearOperator::zeros(rows, xt_len)));
            }
            row_ops.push(row);
            rhs.push(c_prime * beta);
        }
        if has_tilde {
            let lead = |rows: usize| -> Vec<Option<LinearOperator>> {
                let mut v = Vec::new();
                if has_x {
                    v.push(Some(LinearOperator::zeros(rows, x_len)));
                }
                if coupled {
                    v.push(Some(LinearOperator::zeros(rows, y_len)));
                }
                v
            };
            if data.has_shared() {
                let ct = per_block_leaves(&data.c_tilde, Tag::CTilde, leaves).expect("shared blocks present");
                let mut row = lead(ct.rows());
                row.push(Some(ct));
                row_ops.push(row);
                rhs.push(stack_vectors(&data.c_tilde_vec));
            }
            let wx = gossip.op(leaves, dims.d_tilde)?.scaled(gamma);
            let mut row = lead(wx.rows());
            row.push(Some(wx));
            row_ops.push(row);
            rhs.push(Vector::zeros(n * dims.d_tilde));
        }
        if row_ops.is_empty() {
            return Err(Error::invalid("problem has no constraints"));
        }
        // Rows list column groups in the order (x, y, x~); pad missing leading groups.
        let ncols = row_ops.iter().map(|r| r.len()).max().unwrap();
        for r in row_ops.iter_mut() {
            while r.len() < ncols {
                r.insert(0, None);
            }
        }
        let scales: Vec<Vec<f64>> = row_ops.iter().map(|r| vec![1.0; r.len()]).collect();
        let op = operators::block_stack(&row_ops, &scales)?;
        Ok((op, stack_vectors(&rhs), pen))
    };

    let (b_plain, b_vec, pen_plain) = assemble(&Leaves { counters: None })?;
    let counters = opts.counters.clone().unwrap_or_default();
    let (b_counted, _, pen_counted) = assemble(&Leaves { counters: Some(&counters) })?;
    if b_plain.cols() != layout.dim {
        return Err(Error::invalid(format!(
            "internal layout mismatch: operator has {} columns, layout {}",
            b_plain.cols(),
            layout.dim
        )));
    }
    info.b_bounds = Some(operators::spectral_bounds(&b_plain)?);

    // Objective: sum of node objectives over (x_i, x~_i), penalized when y is present.
    let parts = data
        .objective
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let pos: Vec<usize> = layout.x[i].clone().chain(layout.x_tilde[i].clone()).collect();
            Ok((pos, f.oracle()?))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = ObjectiveOracle::new(SumOfParts::new(layout.dim, parts)?);
    let objective = match (pen_plain, pen_counted) {
        (Some(pp), Some(pc)) => {
            let l_a = a_bounds.map(|b| b.sigma_max_sq).unwrap_or(0.0);
            if !(mu_f > 0.0) || l_a == 0.0 {
                return Err(Error::invalid(
                    "coupled reformulation needs mu_f > 0 and a nonzero A; use the regularized solver for convex objectives",
                ));
            }
            let r = mu_f / (2.0 * l_a);
            info.penalty_r = Some(r);
            let smax = linalg::sigma_bounds(&pp.to_dense(), RANK_TOL).0;
            let g = penalize_with_bound(&base, &pc, &stack_vectors(&data.b), r, Some(smax))?;
            let c = g.constants();
            g.with_constants(Constants { mu: mu_f / 4.0, l: c.l, m: c.m })
        }
        _ => base,
    };

    Ok(AffineProblem {
        objective,
        b_op: b_counted,
        b_plain,
        b: b_vec,
        solution_hint: None,
        layout,
        counters,
        kind,
        info,
    })
}

/// Block-diagonal dense operator charged once per apply of the whole block.
/// Returns None for an empty list.
fn per_block_leaves(blocks: &[Matrix], tag: Tag, leaves: &Leaves) -> Option<LinearOperator> {
    if blocks.is_empty() {
        return None;
    }
    Some(leaves.leaf(block_diag_dense_op(blocks, tag).ok()?))
}

/// Consensus: x~_1 = ... = x~_n through B = W (x) I.
pub fn build_consensus(data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
    if data.has_coupled() || !data.c.is_empty() || data.has_shared() {
        return Err(Error::invalid("consensus builder takes no A, C or C~ data; use build_mixed"));
    }
    build_general(data, opts, ProblemKind::Consensus)
}

/// Shared-variable constraints C~_i x~ = c~_i on local copies plus consensus.
pub fn build_shared(data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
    if data.has_coupled() || !data.c.is_empty() || !data.has_shared() {
        return Err(Error::invalid("shared builder takes only C~ data"));
    }
    build_general(data, opts, ProblemKind::Shared)
}

/// Coupled constraints sum_i (A_i x_i - b_i) = 0 through B = (A  beta W).
pub fn build_coupled(data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
    if !data.has_coupled() || data.has_local() || data.has_shared() {
        return Err(Error::invalid("coupled builder takes only A data"));
    }
    if data.dims()?.d_tilde != 0 {
        return Err(Error::invalid("coupled builder has no shared variable"));
    }
    build_general(data, opts, ProblemKind::Coupled)
}

/// Coupled plus local constraints through B = ((A, alpha W), (beta C, 0)).
pub fn build_coupled_local(data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
    if !data.has_coupled() || data.c.is_empty() || data.has_shared() {
        return Err(Error::invalid("coupled-local builder takes A and C data only"));
    }
    if data.dims()?.d_tilde != 0 {
        return Err(Error::invalid("coupled-local builder has no shared variable"));
    }
    build_general(data, opts, ProblemKind::CoupledLocal)
}

/// The full problem: K = diag(B, B~) over z = (x, y, x~ copies).
pub fn build_mixed(data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
    build_general(data, opts, ProblemKind::Mixed)
}

/// Dense solution of the original (non-lifted) problem.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x: Vec<Vector>,
    pub x_tilde: Vector,
    pub value: f64,
}

/// Solves the original problem densely; requires quadratic node objectives.
pub fn reference_solution(data: &MixedProblemData) -> Result<ReferenceSolution> {
    let dims = data.dims()?;
    let n = data.n;
    let x_len: usize = dims.d.iter().sum();
    let total = x_len + dims.d_tilde;
    let mut h = Matrix::zeros(total, total);
    let mut g = Vector::zeros(total);
    let mut off = 0;
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let pos: Vec<usize> = (off..off + dims.d[i]).chain(x_len..total).collect();
        off += dims.d[i];
        let (hi, gi, _) = data.objective[i]
            .oracle()?
            .quadratic_form()
            .ok_or_else(|| Error::invalid("reference solution needs quadratic objectives"))?;
        for (a, &pa) in pos.iter().enumerate() {
            g[pa] += gi[a];
            for (b, &pb) in pos.iter().enumerate() {
                h[(pa, pb)] += hi[(a, b)];
            }
        }
        positions.push(pos);
    }
    let mut rows: Vec<Matrix> = Vec::new();
    let mut rhs: Vec<Vector> = Vec::new();
    if data.has_coupled() {
        let mut r = Matrix::zeros(dims.m, total);
        let mut off = 0;
        let mut s = Vector::zeros(dims.m);
        for i in 0..n {
            r.view_mut((0, off), (dims.m, dims.d[i])).copy_from(&data.a[i]);
            off += dims.d[i];
            s += &data.b[i];
        }
        rows.push(r);
        rhs.push(s);
    }
    if !data.c.is_empty() {
        let mut off = 0;
        for i in 0..n {
            let mut r = Matrix::zeros(data.c[i].nrows(), total);
            r.view_mut((0, off), (data.c[i].nrows(), dims.d[i])).copy_from(&data.c[i]);
            off += dims.d[i];
            rows.push(r);
            rhs.push(data.c_vec[i].clone());
        }
    }
    if data.has_shared() {
        for i in 0..n {
            let mut r = Matrix::zeros(data.c_tilde[i].nrows(), total);
            r.view_mut((0, x_len), (data.c_tilde[i].nrows(), dims.d_tilde)).copy_from(&data.c_tilde[i]);
            rows.push(r);
            rhs.push(data.c_tilde_vec[i].clone());
        }
    }
    let (bm, bv) = if rows.is_empty() {
        (Matrix::zeros(0, total), Vector::zeros(0))
    } else {
        (linalg::vstack(&rows), stack_vectors(&rhs))
    };
    let u = linalg::solve_equality_qp(&h, &g, &bm, &bv)?;
    let value = 0.5 * u.dot(&(&h * &u)) + g.dot(&u);
    let mut x = Vec::with_capacity(n);
    let mut off = 0;
    for i in 0..n {
        x.push(u.rows(off, dims.d[i]).into_owned());
        off += dims.d[i];
    }
    Ok(ReferenceSolution { x, x_tilde: u.rows(x_len, dims.d_tilde).into_owned(), value })
}

/// Constants for the strongly convex nonsmooth penalty with coupled constraints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonsmoothPenaltyConfig {
    /// alpha^2 = (mu_A + L_A) / mu_W.
    pub alpha_sq: f64,
    /// Dual-multiplier radius M / sigma_min+(K); the penalty weight is r^2 / eps.
    pub r: f64,
    /// eps clipped to at most 4 r^2 mu_A / mu_f.
    pub eps_checked: f64,
    pub clipped: bool,
}

/// alpha^2 = (mu_A + L_A) / mu_W.
pub fn nonsmooth_alpha_sq(a: SpectralBounds, w: SpectralBounds) -> Result<f64> {
    if !(w.sigma_min_plus_sq > 0.0) {
        return Err(Error::invalid("sigma_min+^2(W) must be positive"));
    }
    Ok((a.sigma_min_plus_sq + a.sigma_max_sq) / w.sigma_min_plus_sq)
}

/// alpha^2, r = M / sigma_min+(K) and eps clipped to 4 r^2 mu_A / mu_f.
pub fn nonsmooth_strongly_convex_penalty_config(
    m: f64,
    mu_f: f64,
    a: SpectralBounds,
    w: SpectralBounds,
    k: SpectralBounds,
    eps: f64,
) -> Result<NonsmoothPenaltyConfig> {
    if !(mu_f > 0.0) {
        return Err(Error::invalid("mu_f must be positive"));
    }
    if !(k.sigma_min_plus_sq > 0.0) || !(a.sigma_min_plus_sq > 0.0) {
        return Err(Error::invalid("sigma_min+ of A and K must be positive"));
    }
    let alpha_sq = nonsmooth_alpha_sq(a, w)?;
    let r = m / k.sigma_min_plus_sq.sqrt();
    let bound = 4.0 * r * r * a.sigma_min_plus_sq / mu_f;
    let clipped = eps > bound;
    Ok(NonsmoothPenaltyConfig { alpha_sq, r, eps_checked: if clipped { bound } else { eps }, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use generate::{random_instance, InstanceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x_matches(p: &AffineProblem, r: &ReferenceSolution, tol: f64) {
        let z = p.dense_solution().unwrap();
        for i in 0..r.x.len() {
            let xi = p.layout.x_part(&z, i);
            assert!((&xi - &r.x[i]).norm() <= tol * (1.0 + r.x[i].norm()), "node {i}: {xi} vs {}", r.x[i]);
            if !r.x_tilde.is_empty() {
                let t = p.layout.x_tilde_part(&z, i);
                assert!((&t - &r.x_tilde).norm() <= tol * (1.0 + r.x_tilde.norm()));
            }
        }
        assert!(p.residual(&z) <= 1e-8);
    }

    #[test]
    fn builders_reproduce_reference_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cases = [
            InstanceSpec { d: 0, m: 0, d_tilde: 2, ..Default::default() },
            InstanceSpec { d: 0, m: 0, d_tilde: 3, p_tilde: 1, ..Default::default() },
            InstanceSpec::default(),
            InstanceSpec { p: 1, ..Default::default() },
            InstanceSpec { p: 1, d_tilde: 2, p_tilde: 1, ..Default::default() },
        ];
        for (k, spec) in cases.iter().enumerate() {
            let (data, _, _) = random_instance(&mut rng, spec).unwrap();
            let r = reference_solution(&data).unwrap();
            for cheb in [false, true] {
                let opts = BuildOptions { chebyshev_gossip: cheb, chebyshev_local: cheb, counters: None };
                let p = match k {
                    0 => build_consensus(&data, &opts),
                    1 => build_shared(&data, &opts),
                    2 => build_coupled(&data, &opts),
                    3 => build_coupled_local(&data, &opts),
                    _ => build_mixed(&data, &opts),
                }
                .unwrap();
                x_matches(&p, &r, 1e-7);
                let m = build_mixed(&data, &opts).unwrap();
                x_matches(&m, &r, 1e-7);
                x_matches(&p.chebyshev_preconditioned().unwrap(), &r, 1e-6);
            }
        }
    }

    #[test]
    fn penalized_objective_is_strongly_convex_on_search_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [InstanceSpec::default(), InstanceSpec { p: 1, ..Default::default() }] {
            let (data, _, _) = random_instance(&mut rng, &spec).unwrap();
            for cheb in [false, true] {
                let opts = BuildOptions { chebyshev_gossip: cheb, chebyshev_local: cheb, counters: None };
                let p = build_mixed(&data, &opts).unwrap();
                let (h, _, _) = p.objective.quadratic_form().unwrap();
                let t = p.layout.search_space_basis();
                let ev = linalg::sym_eigenvalues(&(t.transpose() * h * &t));
                let c = p.objective.constants();
                assert!(ev[0] >= c.mu * (1.0 - 1e-9), "{} < {}", ev[0], c.mu);
                assert!(ev[ev.len() - 1] <= c.l.unwrap() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn nonsmooth_alpha_plug() {
        let one = SpectralBounds { sigma_max_sq: 1.0, sigma_min_plus_sq: 1.0 };
        assert_eq!(nonsmooth_alpha_sq(one, one).unwrap(), 2.0);
        let cfg = nonsmooth_strongly_convex_penalty_config(1.0, 1.0, one, one, one, 10.0).unwrap();
        assert!(cfg.clipped && cfg.eps_checked < 10.0);
        assert_eq!(cfg.eps_checked, 4.0);
    }
}
