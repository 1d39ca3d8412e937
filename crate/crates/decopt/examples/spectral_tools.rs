//! Lazy operators, their spectral bounds, and Chebyshev compression of a badly
//! conditioned constraint matrix.

use decopt::conditioning::{chebyshev_degree, chebyshev_operator};
use decopt::operators::{block_diag, hstack, kron_gossip, spectral_bounds, LinearOperator, Tag};
use decopt::problems::generate::matrix_with_kappa;
use decopt::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Two blocks side by side and on the diagonal.
    let a1 = LinearOperator::dense(matrix_with_kappa(&mut rng, 4, 6, 50.0), Tag::A);
    let a2 = LinearOperator::dense(matrix_with_kappa(&mut rng, 4, 5, 200.0), Tag::A);
    let wide = hstack(&[a1.clone(), a2.clone()])?;
    let diag = block_diag(&[a1, a2])?;
    println!("hstack: {}x{}, kappa {:.1}", wide.rows(), wide.cols(), spectral_bounds(&wide)?.kappa());
    println!("block_diag: {}x{}, kappa {:.1}", diag.rows(), diag.cols(), spectral_bounds(&diag)?.kappa());

    // W (x) I_d for a path gossip matrix.
    let w = decopt::network::standard_topology(decopt::network::Topology::Path, 5)?.w;
    let gossip = kron_gossip(&w, 3)?;
    let gb = spectral_bounds(&gossip)?;
    println!("path(5) (x) I_3: sigma_max^2 {:.3}, sigma_min+^2 {:.4}", gb.sigma_max_sq, gb.sigma_min_plus_sq);

    // Chebyshev compression of an ill-conditioned B.
    let b_op = LinearOperator::dense(matrix_with_kappa(&mut rng, 6, 10, 1e4), Tag::Other);
    let bounds = spectral_bounds(&b_op)?;
    let rhs = b_op.apply(&decopt::linalg::Vector::from_element(10, 1.0));
    let (k_op, _) = chebyshev_operator(&b_op, &rhs, bounds);
    println!(
        "kappa(B) {:.1} -> degree {} -> kappa(K) {:.3}",
        bounds.kappa(),
        chebyshev_degree(bounds),
        spectral_bounds(&k_op)?.kappa()
    );
    Ok(())
}
