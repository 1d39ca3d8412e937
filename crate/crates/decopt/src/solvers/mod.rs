//! APAPC for smooth problems (strongly convex directly, convex through
//! regularization) and gradient sliding for nonsmooth ones.

mod sliding;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use sliding::{gradient_sliding, restarted_sliding, sliding_prox_step, SlidingConfig};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::operators::{instrumented, Counters, LinearOperator, SpectralBounds, Tag};
use crate::problems::{regularize, AffineProblem};

/// Iterates whose norm exceeds this abort the solve.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Step sizes of APAPC and an iteration budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApapcParams {
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Maximum number of iterations.
    pub n: usize,
}

/// tau = min(1, sqrt(mu/L)/2), eta = 1/(4 tau L), theta = 1/(eta sigma_max^2), alpha = mu.
///
/// The budget `n` is 20 kappa_B sqrt(L/mu) ln(1e8), generous enough that stopping
/// rules decide when to stop.
pub fn apapc_params(mu: f64, l: f64, bounds: SpectralBounds) -> Result<ApapcParams> {
    if !(mu > 0.0) {
        return Err(Error::invalid("apapc needs mu > 0; use solve_convex_regularized for convex objectives"));
    }
    if !(l >= mu) || !l.is_finite() {
        return Err(Error::invalid(format!("need mu <= L < inf, got mu = {mu}, L = {l}")));
    }
    if !(bounds.sigma_max_sq > 0.0 && bounds.sigma_min_plus_sq > 0.0) {
        return Err(Error::invalid("spectral bounds must be positive"));
    }
    let tau = (0.5 * (mu / l).sqrt()).min(1.0);
    let eta = 1.0 / (4.0 * tau * l);
    let theta = 1.0 / (eta * bounds.sigma_max_sq);
    let n = (20.0 * bounds.kappa() * (l / mu).sqrt() * 1e8f64.ln()).ceil() as usize;
    Ok(ApapcParams { eta, theta, alpha: mu, tau, n })
}

/// When APAPC stops before its iteration budget.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StopRule {
    /// Fixed-point residual |u^{k+1} - u^k| / eta + |B u^{k+1/2} - b| at or below this.
    pub tol: Option<f64>,
    /// Distance to the solution hint at or below this.
    pub target_distance: Option<f64>,
}

/// Output of a solve.
#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub final_point: Vector,
    pub iterations: usize,
    /// |u^k - u*| per recorded iterate, when a solution hint is known.
    pub distance_history: Vec<f64>,
    /// G(u^k) - G(u*) per recorded iterate, when a solution hint is known.
    pub objective_gap_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    /// |B u^k - b| per recorded iterate.
    pub constraint_residual_history: Vec<f64>,
    /// Oracle counts consumed by this solve.
    pub counters: Counters,
    /// Cumulative counts at each recorded iterate.
    pub counter_history: Vec<Counters>,
    pub converged: bool,
    pub wall_time: f64,
    /// Derived quantities worth reporting (penalty, stage count, ...).
    pub info: BTreeMap<String, f64>,
}

/// Records iterates against the problem without touching its counters.
pub(crate) struct Recorder<'a> {
    problem: &'a AffineProblem,
    start: Counters,
    started: Instant,
    hint_value: Option<f64>,
    pub report: SolveReport,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(problem: &'a AffineProblem) -> Self {
        let hint_value =
            problem.counters.uncounted(|| problem.solution_hint.as_ref().map(|h| problem.objective.value(h)));
        Self {
            problem,
            start: problem.counters.snapshot(),
            started: Instant::now(),
            hint_value,
            report: SolveReport::default(),
        }
    }

    pub(crate) fn counters(&self) -> Counters {
        self.problem.counters.snapshot() - self.start
    }

    /// Records u and returns its distance to the hint, if any.
    pub(crate) fn record(&mut self, u: &Vector) -> Option<f64> {
        let r = &mut self.report;
        let value = self.problem.counters.uncounted(|| self.problem.objective.value(u));
        r.objective_history.push(value);
        r.constraint_residual_history.push(self.problem.residual(u));
        let c = self.problem.counters.snapshot() - self.start;
        r.counter_history.push(c);
        let dist = self.problem.solution_hint.as_ref().map(|h| (u - h).norm());
        if let (Some(d), Some(v)) = (dist, self.hint_value) {
            r.distance_history.push(d);
            r.objective_gap_history.push(value - v);
        }
        dist
    }

    pub(crate) fn finish(mut self, u: Vector, iterations: usize, converged: bool) -> SolveReport {
        self.report.counters = self.counters();
        self.report.final_point = u;
        self.report.iterations = iterations;
        self.report.converged = converged;
        self.report.wall_time = self.started.elapsed().as_secs_f64();
        self.report
    }
}

/// The top-level constraint operator, charged as `Other` to the problem's counters.
pub(crate) fn counted_b(problem: &AffineProblem) -> LinearOperator {
    instrumented(&problem.b_op.with_tag(Tag::Other), &problem.counters)
}

pub(crate) fn check_finite(u: &Vector, iteration: usize) -> Result<()> {
    let norm = u.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence { iteration, norm });
    }
    Ok(())
}

/// Runs `params.n` APAPC iterations from `u0`.
pub fn apapc(problem: &AffineProblem, params: &ApapcParams, u0: &Vector) -> Result<SolveReport> {
    apapc_with(problem, params, u0, &StopRule::default())
}

/// APAPC with an early-stopping rule.
pub fn apapc_with(problem: &AffineProblem, params: &ApapcParams, u0: &Vector, stop: &StopRule) -> Result<SolveReport> {
    let dim = problem.objective.dim();
    if u0.len() != dim {
        return Err(Error::invalid(format!("u0 has length {}, expected {dim}", u0.len())));
    }
    if problem.objective.domain().is_some() {
        return Err(Error::invalid("apapc works on the full space; box domains need the sliding solver"));
    }
    let ApapcParams { eta, theta, alpha, tau, n } = *params;
    if !(eta > 0.0 && theta > 0.0 && alpha > 0.0 && tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("apapc parameters out of range"));
    }
    let b_op = counted_b(problem);
    let mut rec = Recorder::new(problem);
    let shrink = 1.0 / (1.0 + eta * alpha);
    let momentum = 2.0 * tau / (2.0 - tau);

    let mut u = u0.clone();
    let mut uf = u0.clone();
    let mut z = Vector::zeros(dim);
    let hit = |d: Option<f64>| matches!((d, stop.target_distance), (Some(d), Some(t)) if d <= t);
    if hit(rec.record(&u)) {
        return Ok(rec.finish(u, 0, true));
    }
    for k in 0..n {
        let ug = &u * tau + &uf * (1.0 - tau);
        let g = problem.objective.gradient(&ug);
        problem.counters.record_gradient();
        let base = &u - (g - &ug * alpha) * eta;
        let u_half = (&base - &z * eta) * shrink;
        let r_half = b_op.apply(&u_half) - &problem.b;
        z += b_op.adjoint(&r_half) * theta;
        let u_next = (&base - &z * eta) * shrink;
        uf = ug + (&u_next - &u) * momentum;
        let step = (&u_next - &u).norm();
        u = u_next;
        check_finite(&u, k + 1)?;
        let d = rec.record(&u);
        let fixed_point = step / eta + r_half.norm();
        if hit(d) || stop.tol.is_some_and(|t| fixed_point <= t) {
            return Ok(rec.finish(u, k + 1, true));
        }
    }
    let converged = stop.tol.is_none() && stop.target_distance.is_none();
    Ok(rec.finish(u, n, converged))
}

/// Options of [`solve_convex_regularized`].
#[derive(Clone, Debug, Default)]
pub struct RegularizedOptions {
    /// D = G(u*) - min G; computed densely for quadratics when absent.
    pub d: Option<f64>,
    pub u0: Option<Vector>,
    pub max_iters: Option<usize>,
}

/// The accuracy in argument needed on the regularized problem:
/// delta = eps^2 / (32 (D + eps/2) (L + eps/R^2)).
pub fn regularization_delta(eps: f64, d: f64, l: f64, r: f64) -> f64 {
    eps * eps / (32.0 * (d + 0.5 * eps) * (l + eps / (r * r)))
}

/// Convex smooth problems: APAPC on G + (nu/2)|u - u0|^2 with nu = eps / R^2.
///
/// Stops once |u - u*_nu|^2 <= delta, measured exactly when u*_nu has a dense
/// solution and otherwise through the fixed-point residual nu * sqrt(delta).
pub fn solve_convex_regularized(
    problem: &AffineProblem,
    eps: f64,
    r: f64,
    opts: &RegularizedOptions,
) -> Result<SolveReport> {
    if !(eps > 0.0 && r > 0.0) {
        return Err(Error::invalid("eps and R must be positive"));
    }
    let c = problem.objective.constants();
    let l = c.l.ok_or_else(|| Error::invalid("regularized solver needs a smooth objective"))?;
    let dim = problem.objective.dim();
    let u0 = opts.u0.clone().unwrap_or_else(|| Vector::zeros(dim));
    let nu = eps / (r * r);
    let d = match opts.d {
        Some(d) => d,
        None => dense_gap_to_unconstrained_min(problem)?,
    };
    let delta = regularization_delta(eps, d, l, r);

    let mut reg = problem.clone();
    reg.objective = regularize(&problem.objective, &u0, nu)?;
    let exact = reg.dense_solution().ok();
    reg.solution_hint = exact.clone();
    let bounds = problem.spectral_bounds()?;
    let mut params = apapc_params(c.mu + nu, l + nu, bounds)?;
    if let Some(m) = opts.max_iters {
        params.n = m;
    }
    let stop = match exact {
        Some(_) => StopRule { tol: None, target_distance: Some(delta.sqrt()) },
        None => StopRule { tol: Some(nu * delta.sqrt()), target_distance: None },
    };
    let mut report = apapc_with(&reg, &params, &u0, &stop)?;
    report.info.insert("nu".into(), nu);
    report.info.insert("delta".into(), delta);
    report.info.insert("D".into(), d);
    Ok(report)
}

/// G(u*) - min_u G(u) for a quadratic objective with a bounded-below minimum.
fn dense_gap_to_unconstrained_min(problem: &AffineProblem) -> Result<f64> {
    let (h, g, c0) = problem
        .objective
        .quadratic_form()
        .ok_or_else(|| Error::invalid("D must be supplied for non-quadratic objectives"))?;
    let u_star = problem.dense_solution()?;
    let pinv = crate::linalg::pinv(&h, crate::linalg::RANK_TOL);
    let u_min = -(&pinv * &g);
    if (&h * &u_min + &g).norm() > 1e-8 * (1.0 + g.norm()) {
        return Err(Error::invalid("objective unbounded below; D must be supplied"));
    }
    let value = |u: &Vector| 0.5 * u.dot(&(&h * u)) + g.dot(u) + c0;
    Ok((value(&u_star) - value(&u_min)).max(0.0))
}
