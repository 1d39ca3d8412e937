//! Gossip matrices of the standard topologies and a weighted path tuned to a target
//! condition number.

use decopt::network::{path_for_kappa, standard_topology, Topology};
use decopt::Result;

fn main() -> Result<()> {
    for topo in [Topology::Path, Topology::Cycle, Topology::Star, Topology::Complete] {
        let g = standard_topology(topo, 8)?;
        let (hi, lo) = g.extreme_eigenvalues();
        println!(
            "{topo:?}(8): lambda_max {hi:.3}, lambda_min+ {lo:.4}, kappa {:.2}, checks pass: {}",
            g.kappa(),
            g.check().passed()
        );
    }
    for target in [4.0, 30.0, 500.0] {
        let g = path_for_kappa(target)?;
        println!("path_for_kappa({target}): {} nodes, measured kappa {:.6}", g.w.nrows(), g.kappa());
    }
    Ok(())
}
