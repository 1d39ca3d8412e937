//! Gradient sliding on the penalized problem G(u) + (r/2)|Bu - b|^2.

use serde::{Deserialize, Serialize};

use super::{check_finite, counted_b, Recorder, SolveReport};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problems::{AffineProblem, BoxDomain};

/// Schedule knobs of gradient sliding and its restarted variant.
///
/// Defaults: gamma_k = 2/(k+1), beta_k = 2 L_r / k, eta_t = (t + eta_offset)/2,
/// theta_t = 2(t+1)/(t(t+3)), T_k = ceil(t_scale M^2 N k^2 / (D L_r^2)) with D = 3R^2/4,
/// N = ceil(n_scale 3 R sqrt(L_r / eps)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlidingConfig {
    pub n_scale: f64,
    pub t_scale: f64,
    pub eta_offset: f64,
    /// Hard cap on outer iterations.
    pub max_outer: Option<usize>,
    /// Override for the dual radius M / sigma_min+(B).
    pub r_dual: Option<f64>,
    /// Restart stages target eps_s = restart_c * mu * R_s^2 / 2.
    pub restart_c: f64,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        Self { n_scale: 1.0, t_scale: 1.0, eta_offset: 0.0, max_outer: None, r_dual: None, restart_c: 1.0 / 6.0 }
    }
}

/// argmin_w <g1 + g2, w> + (beta/2)|u3 - w|^2 + (beta eta/2)|u1 - w|^2, clamped to the box.
///
/// `_u2` is the point where the caller evaluated g2; it does not enter the minimizer.
#[allow(clippy::too_many_arguments)]
pub fn sliding_prox_step(
    g1: &Vector,
    g2: &Vector,
    u1: &Vector,
    _u2: &Vector,
    u3: &Vector,
    beta: f64,
    eta: f64,
    domain: Option<&BoxDomain>,
) -> Vector {
    let w = (u3 * beta + u1 * (beta * eta) - g1 - g2) / (beta * (1.0 + eta));
    match domain {
        Some(d) => d.project(&w),
        None => w,
    }
}

/// Gradient sliding for a nonsmooth convex G with penalty r = 2 R_dual^2 / eps.
pub fn gradient_sliding(problem: &AffineProblem, eps: f64, r: f64, cfg: &SlidingConfig) -> Result<SolveReport> {
    gradient_sliding_from(problem, eps, r, cfg, &Vector::zeros(problem.objective.dim()))
}

pub(crate) fn gradient_sliding_from(
    problem: &AffineProblem,
    eps: f64,
    radius: f64,
    cfg: &SlidingConfig,
    u0: &Vector,
) -> Result<SolveReport> {
    if !(eps > 0.0 && radius > 0.0) {
        return Err(Error::invalid("eps and R must be positive"));
    }
    let m = problem
        .objective
        .constants()
        .m
        .ok_or_else(|| Error::invalid("gradient sliding needs a subgradient bound M"))?;
    let bounds = problem.spectral_bounds()?;
    let r_dual = cfg.r_dual.unwrap_or(m / bounds.sigma_min_plus_sq.sqrt());
    let pen = 2.0 * r_dual * r_dual / eps;
    let l = pen * bounds.sigma_max_sq;
    let d_tilde = 0.75 * radius * radius;
    let mut n = (cfg.n_scale * 3.0 * radius * (l / eps).sqrt()).ceil().max(1.0) as usize;
    if let Some(cap) = cfg.max_outer {
        n = n.min(cap);
    }
    let domain = problem.objective.domain().cloned();
    let b_op = counted_b(problem);
    let mut rec = Recorder::new(problem);

    let mut u = match &domain {
        Some(d) => d.project(u0),
        None => u0.clone(),
    };
    let mut u_bar = u.clone();
    rec.record(&u_bar);
    let mut inner_total = 0usize;
    for k in 1..=n {
        let kf = k as f64;
        let gamma = 2.0 / (kf + 1.0);
        let beta = 2.0 * l / kf;
        let t_k = (cfg.t_scale * m * m * n as f64 * kf * kf / (d_tilde * l * l)).ceil().max(1.0) as usize;
        let u_low = &u * gamma + &u_bar * (1.0 - gamma);
        let g2 = b_op.adjoint(&(b_op.apply(&u_low) - &problem.b)) * pen;
        let mut ut = u.clone();
        let mut u_tilde = u.clone();
        for t in 1..=t_k {
            let tf = t as f64;
            let g1 = problem.objective.subgradient(&ut);
            problem.counters.record_gradient();
            let eta = (tf + cfg.eta_offset) / 2.0;
            ut = sliding_prox_step(&g1, &g2, &ut, &u_low, &u, beta, eta, domain.as_ref());
            let theta = 2.0 * (tf + 1.0) / (tf * (tf + 3.0));
            u_tilde = &ut * theta + &u_tilde * (1.0 - theta);
        }
        inner_total += t_k;
        u = ut;
        u_bar = &u_tilde * gamma + &u_bar * (1.0 - gamma);
        check_finite(&u_bar, k)?;
        rec.record(&u_bar);
    }
    let mut report = rec.finish(u_bar, n, true);
    report.info.insert("penalty_r".into(), pen);
    report.info.insert("L_r".into(), l);
    report.info.insert("outer_iterations".into(), n as f64);
    report.info.insert("inner_iterations".into(), inner_total as f64);
    Ok(report)
}

/// Restarted gradient sliding for mu-strongly convex nonsmooth G on a box.
///
/// Stage s runs gradient sliding with radius R_s and eps_s = c mu R_s^2 / 2 from the
/// previous output, then sets R_{s+1}^2 = R_s^2 / 2; the last stage uses eps itself.
pub fn restarted_sliding(
    problem: &AffineProblem,
    eps: f64,
    mu: f64,
    radius: f64,
    cfg: &SlidingConfig,
) -> Result<SolveReport> {
    if !(mu > 0.0 && eps > 0.0 && radius > 0.0) {
        return Err(Error::invalid("restarted sliding needs mu, eps, R > 0"));
    }
    if problem.objective.domain().is_none() {
        return Err(Error::invalid(
            "restarted sliding needs a bounded domain: a strongly convex function has unbounded subgradients on the full space",
        ));
    }
    let start = problem.counters.snapshot();
    let mut u = Vector::zeros(problem.objective.dim());
    let mut r_sq = radius * radius;
    let mut stages = 0usize;
    let mut merged = SolveReport::default();
    loop {
        let eps_s = cfg.restart_c * mu * r_sq / 2.0;
        let last = eps_s <= eps;
        let stage = gradient_sliding_from(problem, if last { eps } else { eps_s }, r_sq.sqrt(), cfg, &u)?;
        stages += 1;
        u = stage.final_point.clone();
        merged.iterations += stage.iterations;
        merged.wall_time += stage.wall_time;
        merged.distance_history.extend(stage.distance_history);
        merged.objective_gap_history.extend(stage.objective_gap_history);
        merged.objective_history.extend(stage.objective_history);
        merged.constraint_residual_history.extend(stage.constraint_residual_history);
        let base = problem.counters.snapshot() - start - stage.counters;
        merged.counter_history.extend(stage.counter_history.into_iter().map(|c| base + c));
        if last {
            break;
        }
        r_sq /= 2.0;
    }
    merged.counters = problem.counters.snapshot() - start;
    merged.final_point = u;
    merged.converged = true;
    merged.info.insert("stages".into(), stages as f64);
    merged.info.insert("restart_c".into(), cfg.restart_c);
    Ok(merged)
}
