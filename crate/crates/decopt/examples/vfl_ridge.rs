//! Vertical federated ridge regression on three nodes, loaded from a JSON instance.
//!
//! Node 0 owns the labels y and two features; nodes 1 and 2 own two features each.
//! The prediction z = sum_i F_i w_i is enforced by the coupled constraint
//! F_0 w_0 - z + F_1 w_1 + F_2 w_2 = 0, and node 0 pays |z - y|^2 / 2.

use std::path::Path;

use decopt::experiment::{prepare, solve_prepared, ExperimentConfig, InstanceSource, Regime};
use decopt::Result;

const W_REF: [f64; 6] = [
    0.6252321700110385,
    0.5518339110994661,
    -0.6930049338331311,
    0.3387324416552236,
    0.8099621528761142,
    -1.669659573485028,
];

fn main() -> Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/vfl_demo.json");
    let mut cfg = ExperimentConfig::new(InstanceSource::File(path));
    cfg.regime = Regime::Coupled;
    // Stop on the fixed-point residual, as one would without a known solution.
    cfg.solver.tol = Some(1e-11);
    let prepared = prepare(&cfg)?;
    let report = solve_prepared(&cfg, &prepared.problem)?;

    let layout = &prepared.problem.layout;
    let x0 = layout.x_part(&report.final_point, 0);
    let mut w: Vec<f64> = x0.rows(0, 2).iter().copied().collect();
    for i in 1..3 {
        w.extend(layout.x_part(&report.final_point, i).iter());
    }
    let err = w.iter().zip(W_REF).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "kappa_W {:.2}, kappa_A_hat {:.2}",
        prepared.kappas.kappa_w.unwrap_or(f64::NAN),
        prepared.kappas.kappa_a_hat.unwrap_or(f64::NAN)
    );
    println!("iterations {}, communications {}", report.iterations, report.counters.communications);
    println!("w = {w:.6?}");
    println!("z = {:.6?}", x0.rows(2, 4).iter().collect::<Vec<_>>());
    println!("max |w - w_ridge| = {err:.2e}");
    Ok(())
}
