//! Solver contracts: sliding loop structure, restart stages, feasibility at output,
//! and no divergence under certified spectral bounds.

use decopt::linalg::Vector;
use decopt::problems::generate::{nonsmooth_consensus, random_instance, InstanceSpec, NonsmoothSpec};
use decopt::problems::{build_mixed, BuildOptions};
use decopt::solvers::{apapc_params, apapc_with, gradient_sliding, restarted_sliding, SlidingConfig, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sliding_splits_oracle_calls() {
    let problem = nonsmooth_consensus(&mut ChaCha8Rng::seed_from_u64(1), &NonsmoothSpec::default()).unwrap();
    let star = problem.solution_hint.clone().unwrap();
    let eps = 0.05;
    let report = gradient_sliding(&problem, eps, star.norm().max(1.0), &SlidingConfig::default()).unwrap();
    let outer = report.info["outer_iterations"] as u64;
    // One B and one B^T per outer iteration; T_k subgradients inside it.
    assert_eq!(report.counters.b_forward, outer);
    assert_eq!(report.counters.b_adjoint, outer);
    assert_eq!(report.counters.grad_calls, report.info["inner_iterations"] as u64);
    let per_outer: Vec<u64> = report.counter_history.windows(2).map(|w| w[1].grad_calls - w[0].grad_calls).collect();
    assert!(per_outer.windows(2).all(|w| w[1] >= w[0]), "T_k grows with k");
    let residual = problem.residual(&report.final_point);
    let gap = problem.objective.value(&report.final_point) - problem.objective.value(&star);
    println!("sliding eps {eps}: residual {residual:.2e} = {:.3} eps, gap {gap:.2e}", residual / eps);
    assert!(residual <= eps && gap <= eps);
}

#[test]
fn restart_stage_count_follows_halving() {
    let spec = NonsmoothSpec { mu: 0.5, radius: Some(2.0), ..Default::default() };
    let problem = nonsmooth_consensus(&mut ChaCha8Rng::seed_from_u64(2), &spec).unwrap();
    let cfg = SlidingConfig::default();
    let radius = 2.0 * (spec.n as f64).sqrt();
    for eps in [1e-1, 1e-2] {
        let report = restarted_sliding(&problem, eps, spec.mu, radius, &cfg).unwrap();
        let halvings = (cfg.restart_c * spec.mu * radius * radius / (2.0 * eps)).log2().ceil().max(0.0);
        assert_eq!(report.info["stages"], halvings + 1.0);
        let nominal = (radius * radius * spec.mu / eps).log2();
        println!("eps {eps}: {} stages, log2(R^2 mu / eps) = {nominal:.2}", report.info["stages"]);
        assert!((report.info["stages"] - nominal).abs() <= 4.0);
    }
}

#[test]
fn apapc_never_diverges_on_certified_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for k in 0..100 {
        let spec = InstanceSpec { n: 3 + k % 3, p: k % 2, d_tilde: 2 * (k % 2), p_tilde: k % 2, ..Default::default() };
        let (data, _, _) = random_instance(&mut rng, &spec).unwrap();
        let p = build_mixed(&data, &BuildOptions::default()).unwrap().chebyshev_preconditioned().unwrap();
        let c = p.objective.constants();
        let params = apapc_params(c.mu, c.l.unwrap(), p.spectral_bounds().unwrap()).unwrap();
        let stop = StopRule { tol: Some(1e-9), target_distance: None };
        let report = apapc_with(&p, &params, &Vector::zeros(p.objective.dim()), &stop)
            .unwrap_or_else(|e| panic!("instance {k}: {e}"));
        assert!(report.converged, "instance {k} hit the budget");
    }
}
