//! Weighted-L1 consensus on a path: gradient sliding for the convex case and
//! restarted sliding once a ridge term makes it strongly convex.

use decopt::problems::generate::{nonsmooth_consensus, NonsmoothSpec};
use decopt::solvers::{gradient_sliding, restarted_sliding, SlidingConfig};
use decopt::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let cfg = SlidingConfig::default();
    for (label, spec) in [
        ("convex", NonsmoothSpec::default()),
        ("strongly convex", NonsmoothSpec { mu: 0.5, radius: Some(2.0), ..Default::default() }),
    ] {
        let problem = nonsmooth_consensus(&mut ChaCha8Rng::seed_from_u64(3), &spec)?;
        let star = problem.solution_hint.clone().expect("consensus minimizer is known");
        for eps in [1e-1, 1e-2] {
            let before = problem.counters.snapshot();
            let report = if spec.mu > 0.0 {
                restarted_sliding(&problem, eps, spec.mu, 2.0 * (spec.n as f64).sqrt(), &cfg)?
            } else {
                gradient_sliding(&problem, eps, star.norm().max(1.0), &cfg)?
            };
            let used = problem.counters.snapshot() - before;
            let gap = problem.objective.value(&report.final_point) - problem.objective.value(&star);
            println!(
                "{label}, eps {eps}: gap {gap:.2e}, residual {:.2e}, subgradients {}, B products {}",
                problem.residual(&report.final_point),
                used.grad_calls,
                used.b_forward
            );
        }
    }
    Ok(())
}
