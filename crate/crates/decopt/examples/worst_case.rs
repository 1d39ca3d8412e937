//! A lower-bound instance with prescribed condition numbers, then APAPC on it.

use decopt::experiment::{run_solve, ExperimentConfig, InstanceSource};
use decopt::worstcase::{build_worst, WorstInstanceSpec};
use decopt::Result;

fn main() -> Result<()> {
    let spec = WorstInstanceSpec { kappa_f: 20.0, kappa_c: 30.0, truncation: 48, ..Default::default() };
    let inst = build_worst(&spec)?;
    println!("L' = {:.4}, mu' = {:.4}, rho = {:.6}", inst.l_prime, inst.mu_prime, inst.rho);
    for (name, target, measured) in &inst.measurements {
        println!("{name}: target {target:.4}, measured {measured:.4}");
    }
    let outcome = run_solve(&ExperimentConfig::new(InstanceSource::Worstcase(spec)))?;
    let row = outcome.row;
    println!(
        "apapc: {} iterations, {} gradient calls, {} communications",
        row.iterations, row.grad_calls, row.communications
    );
    Ok(())
}
