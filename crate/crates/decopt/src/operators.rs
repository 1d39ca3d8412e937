//! Matrix-free linear operators with block composition, Kronecker gossip lifting,
//! dense spectral analysis and per-tag oracle counters.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, RANK_TOL};

/// Default cap on max(rows, cols) for dense materialization.
pub const DEFAULT_DENSE_CAP: usize = 4000;

/// Which counter an operator's applications are charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    A,
    C,
    CTilde,
    W,
    Other,
}

impl Tag {
    fn index(self) -> usize {
        match self {
            Tag::A => 0,
            Tag::C => 1,
            Tag::CTilde => 2,
            Tag::W => 3,
            Tag::Other => 4,
        }
    }
}

/// Mutable oracle counters owned by a single solve session.
#[derive(Debug, Default)]
pub struct CounterSet {
    grad: AtomicU64,
    forward: [AtomicU64; 5],
    adjoint: [AtomicU64; 5],
    /// Nesting depth of [`CounterSet::uncounted`] sections; nothing is recorded while positive.
    paused: AtomicU64,
}

struct Resume<'a>(&'a AtomicU64);

impl Drop for Resume<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::Relaxed);
    }
}

impl CounterSet {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn active(&self) -> bool {
        self.paused.load(Ordering::Relaxed) == 0
    }

    pub fn record_gradient(&self) {
        if self.active() {
            self.grad.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn record_forward(&self, tag: Tag) {
        if self.active() {
            self.forward[tag.index()].fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn record_adjoint(&self, tag: Tag) {
        if self.active() {
            self.adjoint[tag.index()].fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Runs `f` without recording anything, for diagnostics that are not oracle calls.
    pub fn uncounted<T>(&self, f: impl FnOnce() -> T) -> T {
        self.paused.fetch_add(1, Ordering::Relaxed);
        let _resume = Resume(&self.paused);
        f()
    }

    pub fn forward(&self, tag: Tag) -> u64 {
        self.forward[tag.index()].load(Ordering::Relaxed)
    }

    pub fn adjoint(&self, tag: Tag) -> u64 {
        self.adjoint[tag.index()].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> Counters {
        let both = |t: Tag| self.forward(t) + self.adjoint(t);
        Counters {
            grad_calls: self.grad.load(Ordering::Relaxed),
            mul_a: both(Tag::A),
            mul_c: both(Tag::C),
            mul_ctilde: both(Tag::CTilde),
            communications: both(Tag::W),
            b_forward: self.forward(Tag::Other),
            b_adjoint: self.adjoint(Tag::Other),
        }
    }
}

/// Immutable view of a [`CounterSet`].
///
/// `b_forward` / `b_adjoint` count applications of operators tagged `Other`,
/// which the solvers use for the top-level constraint operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub grad_calls: u64,
    pub mul_a: u64,
    pub mul_c: u64,
    pub mul_ctilde: u64,
    pub communications: u64,
    pub b_forward: u64,
    pub b_adjoint: u64,
}

impl std::ops::Add for Counters {
    type Output = Counters;
    fn add(self, o: Counters) -> Counters {
        Counters {
            grad_calls: self.grad_calls + o.grad_calls,
            mul_a: self.mul_a + o.mul_a,
            mul_c: self.mul_c + o.mul_c,
            mul_ctilde: self.mul_ctilde + o.mul_ctilde,
            communications: self.communications + o.communications,
            b_forward: self.b_forward + o.b_forward,
            b_adjoint: self.b_adjoint + o.b_adjoint,
        }
    }
}

impl std::ops::Sub for Counters {
    type Output = Counters;
    fn sub(self, o: Counters) -> Counters {
        Counters {
            grad_calls: self.grad_calls - o.grad_calls,
            mul_a: self.mul_a - o.mul_a,
            mul_c: self.mul_c - o.mul_c,
            mul_ctilde: self.mul_ctilde - o.mul_ctilde,
            communications: self.communications - o.communications,
            b_forward: self.b_forward - o.b_forward,
            b_adjoint: self.b_adjoint - o.b_adjoint,
        }
    }
}

/// Behaviour behind a [`LinearOperator`]. Implementations must be pure.
pub trait OperatorImpl: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn adjoint(&self, y: &Vector) -> Vector;
}

/// A shared, immutable linear operator with a counter tag.
#[derive(Clone)]
pub struct LinearOperator {
    inner: Arc<dyn OperatorImpl>,
    tag: Tag,
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinearOperator({}x{}, {:?})", self.rows(), self.cols(), self.tag)
    }
}

impl LinearOperator {
    pub fn from_impl(inner: Arc<dyn OperatorImpl>, tag: Tag) -> Self {
        Self { inner, tag }
    }

    pub fn dense(m: Matrix, tag: Tag) -> Self {
        Self::from_impl(Arc::new(Dense(m)), tag)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_impl(Arc::new(Identity(n)), Tag::Other)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_impl(Arc::new(Zero { rows, cols }), Tag::Other)
    }

    pub fn rows(&self) -> usize {
        self.inner.rows()
    }

    pub fn cols(&self) -> usize {
        self.inner.cols()
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    pub fn with_tag(&self, tag: Tag) -> Self {
        Self { inner: self.inner.clone(), tag }
    }

    /// Forward product `B x`.
    pub fn apply(&self, x: &Vector) -> Vector {
        assert_eq!(x.len(), self.cols(), "apply: input length mismatch");
        self.inner.apply(x)
    }

    /// Adjoint product `B^T y`.
    pub fn adjoint(&self, y: &Vector) -> Vector {
        assert_eq!(y.len(), self.rows(), "adjoint: input length mismatch");
        self.inner.adjoint(y)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_impl(Arc::new(Scaled { op: self.clone(), s }), self.tag)
    }

    /// The adjoint as an operator in its own right.
    pub fn transpose(&self) -> Self {
        Self::from_impl(Arc::new(Transposed(self.clone())), self.tag)
    }

    /// Product `self * rhs`.
    pub fn compose(&self, rhs: &LinearOperator) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::invalid(format!(
                "compose: {}x{} times {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self::from_impl(Arc::new(Product { left: self.clone(), right: rhs.clone() }), Tag::Other))
    }

    /// Dense form, built column by column from forward applies.
    pub fn to_dense(&self) -> Matrix {
        let (r, c) = (self.rows(), self.cols());
        let mut m = Matrix::zeros(r, c);
        let mut e = Vector::zeros(c);
        for j in 0..c {
            e[j] = 1.0;
            m.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        m
    }

    /// Dense form, refusing operators above `cap` in either dimension.
    pub fn to_dense_capped(&self, cap: usize) -> Result<Matrix> {
        if self.rows().max(self.cols()) > cap {
            return Err(Error::Capacity { rows: self.rows(), cols: self.cols(), cap });
        }
        Ok(self.to_dense())
    }
}

struct Dense(Matrix);

impl OperatorImpl for Dense {
    fn rows(&self) -> usize {
        self.0.nrows()
    }
    fn cols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.0 * x
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.0.tr_mul(y)
    }
}

struct Identity(usize);

impl OperatorImpl for Identity {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &Vector) -> Vector {
        x.clone()
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        y.clone()
    }
}

struct Zero {
    rows: usize,
    cols: usize,
}

impl OperatorImpl for Zero {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.rows)
    }
    fn adjoint(&self, _y: &Vector) -> Vector {
        Vector::zeros(self.cols)
    }
}

struct Scaled {
    op: LinearOperator,
    s: f64,
}

impl OperatorImpl for Scaled {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.op.apply(x) * self.s
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.op.adjoint(y) * self.s
    }
}

struct Transposed(LinearOperator);

impl OperatorImpl for Transposed {
    fn rows(&self) -> usize {
        self.0.cols()
    }
    fn cols(&self) -> usize {
        self.0.rows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.0.adjoint(x)
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.0.apply(y)
    }
}

struct Product {
    left: LinearOperator,
    right: LinearOperator,
}

impl OperatorImpl for Product {
    fn rows(&self) -> usize {
        self.left.rows()
    }
    fn cols(&self) -> usize {
        self.right.cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.left.apply(&self.right.apply(x))
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.right.adjoint(&self.left.adjoint(y))
    }
}

/// Block grid: cell (i, j) maps column block j into row block i.
struct Grid {
    cells: Vec<Vec<Option<(LinearOperator, f64)>>>,
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(sizes.len() + 1);
    out.push(0);
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}

impl OperatorImpl for Grid {
    fn rows(&self) -> usize {
        self.row_sizes.iter().sum()
    }
    fn cols(&self) -> usize {
        self.col_sizes.iter().sum()
    }
    fn apply(&self, x: &Vector) -> Vector {
        let ro = offsets(&self.row_sizes);
        let co = offsets(&self.col_sizes);
        let mut y = Vector::zeros(self.rows());
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some((op, s)) = cell {
                    let xj = x.rows(co[j], self.col_sizes[j]).into_owned();
                    let mut yi = y.rows_mut(ro[i], self.row_sizes[i]);
                    yi.axpy(*s, &op.apply(&xj), 1.0);
                }
            }
        }
        y
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        let ro = offsets(&self.row_sizes);
        let co = offsets(&self.col_sizes);
        let mut x = Vector::zeros(self.cols());
        for (i, row) in self.cells.iter().enumerate() {
            let yi = y.rows(ro[i], self.row_sizes[i]).into_owned();
            for (j, cell) in row.iter().enumerate() {
                if let Some((op, s)) = cell {
                    let mut xj = x.rows_mut(co[j], self.col_sizes[j]);
                    xj.axpy(*s, &op.adjoint(&yi), 1.0);
                }
            }
        }
        x
    }
}

/// Block-diagonal operator `diag(ops)`.
pub fn block_diag(ops: &[LinearOperator]) -> Result<LinearOperator> {
    if ops.is_empty() {
        return Err(Error::invalid("block_diag needs at least one block"));
    }
    let k = ops.len();
    let cells = (0..k).map(|i| (0..k).map(|j| (i == j).then(|| (ops[i].clone(), 1.0))).collect()).collect();
    Ok(LinearOperator::from_impl(
        Arc::new(Grid {
            cells,
            row_sizes: ops.iter().map(|o| o.rows()).collect(),
            col_sizes: ops.iter().map(|o| o.cols()).collect(),
        }),
        Tag::Other,
    ))
}

/// Blocked operator from a grid of optional cells with per-cell scales.
///
/// Absent cells are zero blocks; every row and column of the grid needs at least
/// one present cell so its size is known.
pub fn block_stack(layout: &[Vec<Option<LinearOperator>>], scales: &[Vec<f64>]) -> Result<LinearOperator> {
    let nr = layout.len();
    if nr == 0 {
        return Err(Error::invalid("block_stack needs at least one row"));
    }
    let nc = layout[0].len();
    if nc == 0 || layout.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid("block_stack rows must have equal, nonzero length"));
    }
    if scales.len() != nr || scales.iter().any(|r| r.len() != nc) {
        return Err(Error::invalid("block_stack scales must match the layout shape"));
    }
    let mut row_sizes = vec![None; nr];
    let mut col_sizes = vec![None; nc];
    for (i, row) in layout.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(op) = cell {
                for (slot, size, what) in
                    [(&mut row_sizes[i], op.rows(), "row"), (&mut col_sizes[j], op.cols(), "column")]
                {
                    match slot {
                        Some(s) if *s != size => {
                            return Err(Error::invalid(format!(
                                "block_stack {what} size mismatch at cell ({i}, {j}): {s} vs {size}"
                            )))
                        }
                        _ => *slot = Some(size),
                    }
                }
            }
        }
    }
    let row_sizes: Vec<usize> = row_sizes
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::invalid(format!("block_stack row {i} is empty"))))
        .collect::<Result<_>>()?;
    let col_sizes: Vec<usize> = col_sizes
        .into_iter()
        .enumerate()
        .map(|(j, s)| s.ok_or_else(|| Error::invalid(format!("block_stack column {j} is empty"))))
        .collect::<Result<_>>()?;
    let cells = layout
        .iter()
        .zip(scales)
        .map(|(row, srow)| row.iter().zip(srow).map(|(c, &s)| c.clone().map(|op| (op, s))).collect())
        .collect();
    Ok(LinearOperator::from_impl(Arc::new(Grid { cells, row_sizes, col_sizes }), Tag::Other))
}

/// Vertical stack `(ops[0]; ops[1]; ...)`.
pub fn vstack(ops: &[LinearOperator]) -> Result<LinearOperator> {
    let layout: Vec<Vec<Option<LinearOperator>>> = ops.iter().map(|o| vec![Some(o.clone())]).collect();
    let scales = vec![vec![1.0]; ops.len()];
    block_stack(&layout, &scales)
}

/// Horizontal stack `(ops[0] ops[1] ...)`.
pub fn hstack(ops: &[LinearOperator]) -> Result<LinearOperator> {
    let layout = vec![ops.iter().map(|o| Some(o.clone())).collect::<Vec<_>>()];
    let scales = vec![vec![1.0; ops.len()]];
    block_stack(&layout, &scales)
}

struct KronGossip {
    w: Matrix,
    block: usize,
}

impl KronGossip {
    fn mul(&self, w: &Matrix, x: &Vector) -> Vector {
        let n = w.nrows();
        let k = self.block;
        // Blocks of x are the rows of an n x k matrix; (W ⊗ I) x = vec(W X).
        let xm = Matrix::from_row_slice(n, k, x.as_slice());
        let ym = w * xm;
        Vector::from_iterator(n * k, ym.transpose().iter().copied())
    }
}

impl OperatorImpl for KronGossip {
    fn rows(&self) -> usize {
        self.w.nrows() * self.block
    }
    fn cols(&self) -> usize {
        self.w.ncols() * self.block
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.mul(&self.w, x)
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.mul(&self.w.transpose(), y)
    }
}

/// The lifted gossip operator `W ⊗ I_block_dim`, applied without forming the product.
pub fn kron_gossip(w: &Matrix, block_dim: usize) -> Result<LinearOperator> {
    if w.nrows() != w.ncols() {
        return Err(Error::invalid("gossip matrix must be square"));
    }
    let asym = linalg::asymmetry(w);
    if asym > 1e-12 {
        return Err(Error::invalid(format!("gossip matrix not symmetric (asymmetry {asym:e})")));
    }
    if block_dim == 0 {
        return Err(Error::invalid("block_dim must be positive"));
    }
    Ok(LinearOperator::from_impl(Arc::new(KronGossip { w: w.clone(), block: block_dim }), Tag::W))
}

struct Instrumented {
    op: LinearOperator,
    counters: Arc<CounterSet>,
}

impl OperatorImpl for Instrumented {
    fn rows(&self) -> usize {
        self.op.rows()
    }
    fn cols(&self) -> usize {
        self.op.cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.counters.record_forward(self.op.tag());
        self.op.apply(x)
    }
    fn adjoint(&self, y: &Vector) -> Vector {
        self.counters.record_adjoint(self.op.tag());
        self.op.adjoint(y)
    }
}

/// Wraps `op` so every apply or adjoint apply is charged to `counters` under `op.tag()`.
pub fn instrumented(op: &LinearOperator, counters: &Arc<CounterSet>) -> LinearOperator {
    LinearOperator::from_impl(Arc::new(Instrumented { op: op.clone(), counters: counters.clone() }), op.tag())
}

/// Bounds on the squared extreme singular values of an operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    /// Upper bound on sigma_max^2.
    pub sigma_max_sq: f64,
    /// Lower bound on the smallest positive sigma^2.
    pub sigma_min_plus_sq: f64,
}

impl SpectralBounds {
    pub fn new(sigma_max_sq: f64, sigma_min_plus_sq: f64) -> Result<Self> {
        if !(sigma_max_sq >= sigma_min_plus_sq && sigma_min_plus_sq >= 0.0) {
            return Err(Error::invalid(format!(
                "spectral bounds must satisfy max >= min+ >= 0, got ({sigma_max_sq}, {sigma_min_plus_sq})"
            )));
        }
        Ok(Self { sigma_max_sq, sigma_min_plus_sq })
    }

    /// sigma_max^2 / sigma_min+^2.
    pub fn kappa(&self) -> f64 {
        self.sigma_max_sq / self.sigma_min_plus_sq
    }
}

/// Exact squared extreme singular values from a dense SVD.
pub fn spectral_bounds(op: &LinearOperator) -> Result<SpectralBounds> {
    spectral_bounds_capped(op, DEFAULT_DENSE_CAP)
}

pub fn spectral_bounds_capped(op: &LinearOperator, cap: usize) -> Result<SpectralBounds> {
    let m = op.to_dense_capped(cap)?;
    let (max, min) = linalg::sigma_bounds(&m, RANK_TOL);
    Ok(SpectralBounds { sigma_max_sq: max, sigma_min_plus_sq: min })
}

/// Orthogonal projector onto ker(op).
pub fn kernel_projector(op: &LinearOperator) -> Result<LinearOperator> {
    let m = op.to_dense_capped(DEFAULT_DENSE_CAP)?;
    let n = linalg::nullspace_basis(&m, RANK_TOL);
    let p = &n * n.transpose();
    Ok(LinearOperator::dense(p, Tag::Other))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn block_diag_of_identities_is_identity() {
        let op = block_diag(&[LinearOperator::identity(1), LinearOperator::identity(1)]).unwrap();
        assert_eq!(op.apply(&v(&[3.0, 5.0])), v(&[3.0, 5.0]));
    }

    #[test]
    fn block_diag_scalar_blocks() {
        let a1 = LinearOperator::dense(Matrix::from_element(1, 1, 2.0), Tag::A);
        let a2 = LinearOperator::dense(Matrix::from_element(1, 1, 3.0), Tag::A);
        let op = block_diag(&[a1, a2]).unwrap();
        assert_eq!(op.apply(&v(&[1.0, 1.0])), v(&[2.0, 3.0]));
    }

    #[test]
    fn block_diag_rejects_empty() {
        assert!(matches!(block_diag(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn block_stack_identity_layout_doubles_identity() {
        let i = LinearOperator::identity(2);
        let op = block_stack(&[vec![Some(i.clone()), None], vec![None, Some(i)]], &[vec![1.0, 1.0], vec![1.0, 1.0]])
            .unwrap();
        assert_eq!(op.to_dense(), Matrix::identity(4, 4));
    }

    #[test]
    fn block_stack_rejects_mismatch() {
        let a = LinearOperator::zeros(2, 3);
        let b = LinearOperator::zeros(3, 3);
        let r = block_stack(&[vec![Some(a), Some(b)]], &[vec![1.0, 1.0]]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kron_two_node_path() {
        let w = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let op = kron_gossip(&w, 1).unwrap();
        assert_eq!(op.apply(&v(&[3.0, 5.0])), v(&[-2.0, 2.0]));
    }

    #[test]
    fn kron_identity_behaves_as_identity() {
        let op = kron_gossip(&Matrix::identity(3, 3), 4).unwrap();
        let x = Vector::from_fn(12, |i, _| i as f64);
        assert_eq!(op.apply(&x), x);
    }

    #[test]
    fn kron_rejects_asymmetric() {
        let w = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(kron_gossip(&w, 1).is_err());
    }

    #[test]
    fn spectral_bounds_of_simple_diagonals() {
        let b = spectral_bounds(&LinearOperator::identity(3)).unwrap();
        assert_eq!((b.sigma_max_sq, b.sigma_min_plus_sq), (1.0, 1.0));
        let d = LinearOperator::dense(Matrix::from_diagonal(&v(&[2.0, 0.0, 1.0])), Tag::Other);
        let b = spectral_bounds(&d).unwrap();
        assert!((b.sigma_max_sq - 4.0).abs() < 1e-12 && (b.sigma_min_plus_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_bounds_respects_cap() {
        let op = LinearOperator::identity(10);
        assert!(matches!(spectral_bounds_capped(&op, 5), Err(Error::Capacity { .. })));
    }

    #[test]
    fn projector_extremes() {
        let p0 = kernel_projector(&LinearOperator::zeros(2, 3)).unwrap().to_dense();
        assert!((p0 - Matrix::identity(3, 3)).norm() < 1e-12);
        let p1 = kernel_projector(&LinearOperator::identity(3)).unwrap().to_dense();
        assert!(p1.norm() < 1e-12);
    }

    #[test]
    fn counters_follow_tags() {
        let counters = CounterSet::new();
        let w = instrumented(&kron_gossip(&Matrix::identity(2, 2), 1).unwrap(), &counters);
        for _ in 0..3 {
            w.apply(&v(&[1.0, 2.0]));
        }
        let a = instrumented(&LinearOperator::dense(Matrix::identity(2, 2), Tag::A), &counters);
        a.apply(&v(&[1.0, 2.0]));
        a.adjoint(&v(&[1.0, 2.0]));
        let s = counters.snapshot();
        assert_eq!(s.communications, 3);
        assert_eq!(s.mul_a, 2);
    }
}
