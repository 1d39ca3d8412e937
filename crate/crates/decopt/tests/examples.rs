//! Runs every example binary that `cargo test` builds alongside the tests.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: [&str; 8] = [
    "spectral_tools",
    "gossip_networks",
    "solve_mixed",
    "vfl_ridge",
    "nonsmooth_sliding",
    "convex_regularized",
    "worst_case",
    "kappa_sweep",
];

fn example_dir() -> PathBuf {
    // target/<profile>/deps/<this test> -> target/<profile>/examples
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|p| p.parent()).unwrap().join("examples")
}

#[test]
fn examples_run_cleanly() {
    let dir = example_dir();
    for name in EXAMPLES {
        let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        assert!(path.exists(), "{} not built; run through `cargo test`", path.display());
        let out = Command::new(&path).output().unwrap();
        assert!(out.status.success(), "{name} failed:\n{}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}

#[test]
fn vfl_example_recovers_ridge_solution() {
    let out = Command::new(example_dir().join(format!("vfl_ridge{}", std::env::consts::EXE_SUFFIX))).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let err: f64 =
        text.lines().find_map(|l| l.strip_prefix("max |w - w_ridge| = ")).expect("error line").parse().unwrap();
    assert!(err <= 1e-8, "{text}");
}
