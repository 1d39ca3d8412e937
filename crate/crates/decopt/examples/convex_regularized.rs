//! A convex quadratic with a rank-deficient Hessian, solved by APAPC on the
//! regularized objective G + (eps / 2R^2) |u|^2.

use decopt::problems::generate::random_convex_problem;
use decopt::solvers::{solve_convex_regularized, RegularizedOptions};
use decopt::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let problem = random_convex_problem(&mut rng, 12, 6, 7, 20.0)?.with_dense_hint()?;
    let star = problem.solution_hint.clone().expect("dense hint");
    let g_star = problem.objective.value(&star);
    let radius = star.norm().max(1.0);
    for eps in [1e-2, 1e-3, 1e-4] {
        let report = solve_convex_regularized(&problem, eps, radius, &RegularizedOptions::default())?;
        let gap = problem.objective.value(&report.final_point) - g_star;
        println!(
            "eps {eps:e}: gap {gap:.2e}, residual {:.2e}, iterations {}",
            problem.residual(&report.final_point),
            report.iterations
        );
    }
    Ok(())
}
