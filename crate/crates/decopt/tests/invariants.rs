//! Property tests for the structural invariants of operators, conditioning,
//! reformulations, solvers and networks.

use decopt::conditioning::{chebyshev_operator, mixed_condition_number, projected_condition_number, MatrixFamily};
use decopt::experiment::{rows_to_csv, run_solve, ExperimentConfig, InstanceSource};
use decopt::io::{instance_from_json, instance_to_json};
use decopt::linalg::{self, Matrix, Vector, RANK_TOL};
use decopt::network::{laplacian, path_for_kappa, weighted_path, Topology};
use decopt::operators::{
    block_diag, block_stack, hstack, instrumented, kernel_projector, kron_gossip, spectral_bounds, vstack, CounterSet,
    LinearOperator, Tag,
};
use decopt::problems::generate::{gaussian_matrix, gaussian_vector, matrix_with_kappa, random_instance, InstanceSpec};
use decopt::problems::{
    build_consensus, build_coupled, build_coupled_local, build_mixed, build_shared, reference_solution, AffineProblem,
    BuildOptions,
};
use decopt::solvers::{apapc_params, apapc_with, StopRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random composite built from every combinator, together with its dense assembly.
fn random_composite(r: &mut ChaCha8Rng) -> (LinearOperator, Matrix) {
    let (m, d1, d2) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
    let a = gaussian_matrix(r, m, d1);
    let b = gaussian_matrix(r, m, d2);
    let c = gaussian_matrix(r, d1, d1);
    let n = r.random_range(2..5);
    let w = laplacian(&(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>(), None, n).unwrap().w;
    let op_a = LinearOperator::dense(a.clone(), Tag::A);
    let op_b = LinearOperator::dense(b.clone(), Tag::C);
    let op_c = LinearOperator::dense(c.clone(), Tag::Other);
    let s = r.random_range(-2.0..2.0);

    let h = hstack(&[op_a.clone(), op_b.clone()]).unwrap();
    let h_dense = linalg::hstack(&[a.clone(), b.clone()]);
    let v = vstack(&[op_a.compose(&op_c).unwrap(), op_a.scaled(s)]).unwrap();
    let v_dense = linalg::vstack(&[&a * &c, &a * s]);
    let g = kron_gossip(&w, m).unwrap();
    let g_dense = linalg::kron_identity(&w, m);
    let grid = vec![vec![Some(h), None], vec![None, Some(g.transpose())]];
    let stacked = block_stack(&grid, &[vec![1.0, 1.0], vec![1.0, 0.5]]).unwrap();
    let mut dense = Matrix::zeros(h_dense.nrows() + g_dense.nrows(), h_dense.ncols() + g_dense.ncols());
    dense.view_mut((0, 0), h_dense.shape()).copy_from(&h_dense);
    dense.view_mut(h_dense.shape(), g_dense.shape()).copy_from(&(g_dense.transpose() * 0.5));
    let full = block_diag(&[stacked, v]).unwrap();
    (full, linalg::block_diag(&[dense, v_dense]))
}

fn build(kind: usize, data: &decopt::problems::MixedProblemData, cheb: bool) -> AffineProblem {
    let opts = BuildOptions { chebyshev_gossip: cheb, chebyshev_local: cheb, counters: None };
    match kind {
        0 => build_consensus(data, &opts),
        1 => build_shared(data, &opts),
        2 => build_coupled(data, &opts),
        3 => build_coupled_local(data, &opts),
        _ => build_mixed(data, &opts),
    }
    .unwrap()
}

fn spec_for(kind: usize, n: usize) -> InstanceSpec {
    let base = InstanceSpec { n, ..Default::default() };
    match kind {
        0 => InstanceSpec { d: 0, m: 0, d_tilde: 2, ..base },
        1 => InstanceSpec { d: 0, m: 0, d_tilde: 3, p_tilde: 1, ..base },
        2 => InstanceSpec { d: 3, m: 2, ..base },
        3 => InstanceSpec { d: 3, m: 2, p: 1, ..base },
        _ => InstanceSpec { d: 2, m: 2, p: 1, d_tilde: 2, p_tilde: 1, ..base },
    }
}

fn solve(problem: &AffineProblem, iters: Option<usize>, target: Option<f64>) -> decopt::solvers::SolveReport {
    let c = problem.objective.constants();
    let mut params = apapc_params(c.mu, c.l.unwrap(), problem.spectral_bounds().unwrap()).unwrap();
    if let Some(n) = iters {
        params.n = n;
    }
    let stop = StopRule { tol: None, target_distance: target };
    apapc_with(problem, &params, &Vector::zeros(problem.objective.dim()), &stop).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn adjoint_consistency(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (op, _) = random_composite(&mut r);
        let bounds = spectral_bounds(&op).unwrap();
        let (cheb, _) = chebyshev_operator(&op, &Vector::zeros(op.rows()), bounds);
        for o in [&op, &cheb] {
            for _ in 0..100 {
                let u = gaussian_vector(&mut r, o.cols());
                let v = gaussian_vector(&mut r, o.rows());
                let lhs = o.apply(&u).dot(&v);
                let rhs = u.dot(&o.adjoint(&v));
                prop_assert!((lhs - rhs).abs() <= 1e-10 * u.norm() * v.norm() * (1.0 + bounds.sigma_max_sq));
            }
        }
    }

    #[test]
    fn composition_fidelity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (op, dense) = random_composite(&mut r);
        for _ in 0..10 {
            let u = gaussian_vector(&mut r, op.cols());
            let want = &dense * &u;
            prop_assert!((op.apply(&u) - &want).norm() <= 1e-12 * (1.0 + want.norm()));
            let v = gaussian_vector(&mut r, op.rows());
            let want_t = dense.transpose() * &v;
            prop_assert!((op.adjoint(&v) - &want_t).norm() <= 1e-12 * (1.0 + want_t.norm()));
        }
    }

    #[test]
    fn projector_laws(seed in any::<u64>(), rows in 1usize..6, cols in 2usize..8) {
        let mut r = rng(seed);
        let rank = r.random_range(1..=rows.min(cols));
        let m = gaussian_matrix(&mut r, rows, rank) * gaussian_matrix(&mut r, rank, cols);
        let op = LinearOperator::dense(m.clone(), Tag::Other);
        let p = kernel_projector(&op).unwrap().to_dense();
        let smax = linalg::singular_values(&m)[0];
        prop_assert!((&p * &p - &p).norm() <= 1e-10);
        prop_assert!((p.transpose() - &p).norm() <= 1e-10);
        prop_assert!((&m * &p).norm() <= 1e-10 * smax);
    }

    #[test]
    fn counters_follow_composition(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let counters = CounterSet::new();
        let a = instrumented(&LinearOperator::dense(gaussian_matrix(&mut r, 4, 4), Tag::A), &counters);
        let c = instrumented(&LinearOperator::dense(gaussian_matrix(&mut r, 2, 4), Tag::C), &counters);
        let w = instrumented(&kron_gossip(&laplacian(&[(0, 1)], None, 2).unwrap().w, 2).unwrap(), &counters);
        let op = block_stack(&[vec![Some(a), Some(w)], vec![Some(c), None]], &[vec![1.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let u = gaussian_vector(&mut r, op.cols());
        let v = gaussian_vector(&mut r, op.rows());
        for _ in 0..k {
            op.apply(&u);
            op.adjoint(&v);
        }
        let s = counters.snapshot();
        let k = k as u64;
        prop_assert_eq!((s.mul_a, s.mul_c, s.communications), (2 * k, 2 * k, 2 * k));
    }

    #[test]
    fn chebyshev_preserves_kernel(seed in any::<u64>(), rows in 2usize..6, cols in 3usize..9) {
        let mut r = rng(seed);
        let kappa = 10f64.powf(r.random_range(0.5..3.0));
        let b = matrix_with_kappa(&mut r, rows, cols, kappa);
        let op = LinearOperator::dense(b.clone(), Tag::Other);
        let (k_op, _) = chebyshev_operator(&op, &Vector::zeros(rows), spectral_bounds(&op).unwrap());
        let kd = k_op.to_dense();
        let ker = linalg::nullspace_basis(&b, RANK_TOL);
        if ker.ncols() > 0 {
            let x = &ker * gaussian_vector(&mut r, ker.ncols());
            prop_assert!((&kd * &x).norm() <= 1e-8 * x.norm());
        }
        // Off the kernel of B, K is bounded below.
        let x = b.transpose() * gaussian_vector(&mut r, rows);
        prop_assert!((&kd * &x).norm() >= 0.5 * x.norm());
        prop_assert_eq!(linalg::nullspace_basis(&kd, 1e-8).ncols(), ker.ncols());
    }

    #[test]
    fn projected_kappa_dominates_mixed_at_equal_rank(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let (m, d) = (r.random_range(1..3), r.random_range(2..5));
        let blocks: Vec<Matrix> = (0..n).map(|_| gaussian_matrix(&mut r, m, d)).collect();
        let d_blocks: Vec<Matrix> = (0..n).map(|_| gaussian_matrix(&mut r, 1, d)).collect();
        let b = MatrixFamily::new(blocks.clone()).unwrap();
        let (mu, kt) = projected_condition_number(&b, &MatrixFamily::new(d_blocks.clone()).unwrap()).unwrap();
        let restricted: Vec<Matrix> =
            blocks.iter().zip(&d_blocks).map(|(bi, di)| bi * linalg::nullspace_basis(di, RANK_TOL)).collect();
        let same_rank = linalg::rank(&linalg::hstack(&restricted), RANK_TOL) == linalg::rank(&linalg::hstack(&blocks), RANK_TOL);
        if mu > 0.0 && same_rank {
            // B' P B'^T <= B' B'^T on a common image, so mu-tilde cannot exceed lambda_min+(S_B).
            let kh = mixed_condition_number(&b, false).unwrap();
            prop_assert!(kt >= kh * (1.0 - 1e-9), "kappa~ {} kappa^ {}", kt, kh);
        }
    }

    #[test]
    fn gossip_matrices_pass_checks(seed in any::<u64>(), n in 2usize..9) {
        let mut r = rng(seed);
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (r.random_range(0..i), i)).collect();
        for _ in 0..n {
            let (i, j) = (r.random_range(0..n), r.random_range(0..n));
            if i < j && !edges.contains(&(i, j)) {
                edges.push((i, j));
            }
        }
        let weights: Vec<f64> = edges.iter().map(|_| r.random_range(0.1..2.0)).collect();
        let g = laplacian(&edges, Some(&weights), n).unwrap();
        prop_assert!(g.check().passed(), "{:?}", g.check());
        for topo in [Topology::Path, Topology::Cycle, Topology::Star, Topology::Complete] {
            if topo != Topology::Cycle || n >= 3 {
                prop_assert!(decopt::network::standard_topology(topo, n).unwrap().check().passed());
            }
        }
    }

    #[test]
    fn path_for_kappa_hits_target(log_kappa in 0.8f64..3.0) {
        let target = 10f64.powf(log_kappa).max(decopt::network::path_kappa(3));
        let g = path_for_kappa(target).unwrap();
        prop_assert!((g.kappa() - target).abs() <= 1e-6 * target);
        prop_assert!(g.n.is_multiple_of(3));
        let path: Vec<(usize, usize)> = (0..g.n - 1).map(|i| (i, i + 1)).collect();
        prop_assert_eq!(g.edges.iter().map(|e| (e.0, e.1)).collect::<Vec<_>>(), path);
        prop_assert!(g.check().passed());
    }

    #[test]
    fn reformulations_match_dense_kkt(seed in any::<u64>(), kind in 0usize..5, n in 2usize..6, cheb in any::<bool>()) {
        let (data, _, _) = random_instance(&mut rng(seed), &spec_for(kind, n)).unwrap();
        let reference = reference_solution(&data).unwrap();
        let p = build(kind, &data, cheb);
        let z = p.dense_solution().unwrap();
        for i in 0..n {
            if let Some(xi) = reference.x.get(i).filter(|x| !x.is_empty()) {
                prop_assert!((p.layout.x_part(&z, i) - xi).norm() <= 1e-6 * (1.0 + xi.norm()));
            }
            if !reference.x_tilde.is_empty() {
                let t = p.layout.x_tilde_part(&z, i);
                prop_assert!((t - &reference.x_tilde).norm() <= 1e-6 * (1.0 + reference.x_tilde.norm()));
            }
        }
    }

    #[test]
    fn consensus_encoding(seed in any::<u64>(), mixed in any::<bool>(), n in 2usize..6) {
        let mut r = rng(seed);
        let kind = if mixed { 4 } else { 1 };
        let (data, _, _) = random_instance(&mut r, &spec_for(kind, n)).unwrap();
        let p = build(kind, &data, true);
        let k = p.b_plain.to_dense();
        // Project a random point onto {K z = v}.
        let z0 = gaussian_vector(&mut r, k.ncols());
        let z = &z0 - linalg::pinv(&k, RANK_TOL) * (&k * &z0 - &p.b);
        prop_assert!((&k * &z - &p.b).norm() <= 1e-8 * (1.0 + p.b.norm()));
        let first = p.layout.x_tilde_part(&z, 0);
        for i in 1..n {
            prop_assert!((p.layout.x_tilde_part(&z, i) - &first).norm() <= 1e-8 * (1.0 + first.norm()));
        }
    }

    #[test]
    fn y_stays_in_zero_sum_subspace(seed in any::<u64>(), local in any::<bool>(), iters in 1usize..60) {
        let kind = if local { 3 } else { 2 };
        let (data, _, _) = random_instance(&mut rng(seed), &spec_for(kind, 4)).unwrap();
        for p in [build(kind, &data, true), build(kind, &data, true).chebyshev_preconditioned().unwrap()] {
            let report = solve(&p, Some(iters), None);
            let y = p.layout.y_part(&report.final_point).unwrap();
            let m = y.len() / 4;
            let block_sum = (0..4).fold(Vector::zeros(m), |acc, i| acc + y.rows(i * m, m));
            prop_assert!(block_sum.norm() <= 1e-8 * y.norm().max(1e-300), "{} vs {}", block_sum.norm(), y.norm());
        }
    }

    #[test]
    fn apapc_converges_within_budget(seed in any::<u64>(), kind in 0usize..5) {
        let (data, _, _) = random_instance(&mut rng(seed), &spec_for(kind, 3)).unwrap();
        let p = build(kind, &data, true).with_dense_hint().unwrap().chebyshev_preconditioned().unwrap();
        prop_assert!(p.spectral_bounds().unwrap().kappa() <= 3.1);
        let star = p.solution_hint.clone().unwrap();
        let c = p.objective.constants();
        let report = solve(&p, None, Some(1e-8));
        let dist = (&report.final_point - &star).norm();
        prop_assert!(dist <= 1e-8);
        let budget = 20.0 * (c.l.unwrap() / c.mu).sqrt() * (star.norm().max(1.0) / 1e-8).ln();
        prop_assert!((report.iterations as f64) <= budget, "{} > {}", report.iterations, budget);
        let n = report.iterations as u64;
        prop_assert_eq!((report.counters.grad_calls, report.counters.b_forward, report.counters.b_adjoint), (n, n, n));
        for w in report.counter_history.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(b.grad_calls >= a.grad_calls && b.mul_a >= a.mul_a && b.mul_c >= a.mul_c);
            prop_assert!(b.mul_ctilde >= a.mul_ctilde && b.communications >= a.communications);
            prop_assert!(b.b_forward >= a.b_forward && b.b_adjoint >= a.b_adjoint);
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), kind in 0usize..5) {
        let a = random_instance(&mut rng(seed), &spec_for(kind, 3)).unwrap().0;
        let b = random_instance(&mut rng(seed), &spec_for(kind, 3)).unwrap().0;
        let text = instance_to_json(&a).unwrap();
        prop_assert_eq!(&text, &instance_to_json(&b).unwrap());
        prop_assert_eq!(instance_to_json(&instance_from_json(&text).unwrap()).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn weighted_path_kappa_is_monotone(n in 3usize..12) {
        let grid: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let kappas: Vec<f64> = grid.iter().map(|&a| weighted_path(n, a).unwrap().kappa()).collect();
        for w in kappas.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn solve_rows_are_reproducible(seed in 0u64..1000) {
        let mut cfg = ExperimentConfig::new(InstanceSource::Random(InstanceSpec { n: 3, ..Default::default() }));
        cfg.seed = seed;
        let a = rows_to_csv(&[run_solve(&cfg).unwrap().row]).unwrap();
        let b = rows_to_csv(&[run_solve(&cfg).unwrap().row]).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Restricting to ker D can raise kappa-tilde above kappa-hat: B = (1 1), D = (0 1)
/// gives sigma_min+^2 = 1 on ker D against 2 on the whole space.
#[test]
fn projected_kappa_can_exceed_mixed() {
    let b = MatrixFamily::new(vec![Matrix::from_row_slice(1, 2, &[1.0, 1.0])]).unwrap();
    let d = MatrixFamily::new(vec![Matrix::from_row_slice(1, 2, &[0.0, 1.0])]).unwrap();
    let kh = mixed_condition_number(&b, false).unwrap();
    let (mu, kt) = projected_condition_number(&b, &d).unwrap();
    assert!((kh - 1.0).abs() < 1e-12);
    assert!((mu - 1.0).abs() < 1e-12);
    assert!((kt - 2.0).abs() < 1e-12);
}
