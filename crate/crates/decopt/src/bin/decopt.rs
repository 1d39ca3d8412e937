//! Command-line front end: `solve`, `sweep`, `spectrum`, `worstcase`, `check`.
//!
//! Exit status 0 on success, 1 when a solver fails, 2 on I/O or config errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decopt::experiment::{self, ExperimentConfig};
use decopt::io::{self, Method};
use decopt::operators::spectral_bounds;
use decopt::worstcase::{self, WorstInstanceSpec};
use decopt::Error;

#[derive(Parser)]
#[command(name = "decopt", version, about = "Decentralized optimization under mixed affine constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the solver accuracy (and the APAPC target accuracy).
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write its CSV row.
    Solve(Common),
    /// Run a sweep, write the CSV table and print the fitted slope.
    Sweep(Common),
    /// Print spectral bounds and condition numbers of an instance.
    Spectrum(Common),
    /// Emit a worst-case instance from a generator spec.
    Worstcase(Common),
    /// Run the built-in invariant suite.
    Check(Common),
}

/// Errors tagged with the exit status they map to.
struct Failure {
    status: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { status: if e.is_solver_failure() { 1 } else { 2 }, message: e.to_string() }
    }
}

fn config_path(c: &Common) -> Result<&Path, Failure> {
    c.config.as_deref().ok_or(Failure { status: 2, message: "--config <path> is required".into() })
}

fn load_experiment(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(config_path(c)?)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = c.eps {
        cfg.solver.eps = eps;
        if cfg.solver.method == Method::Apapc {
            cfg.target_accuracy = eps;
        }
    }
    if c.out.is_some() {
        cfg.output = c.out.clone();
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => Ok(io::write_text(p, text)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
                // A closed pipe (e.g. `| head`) is the reader's choice, not an error.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Failure { status: 2, message: format!("writing to stdout: {e}") })
                }
                _ => Ok(()),
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(c) => {
            let cfg = load_experiment(&c)?;
            let outcome = experiment::run_solve(&cfg)?;
            let r = &outcome.row;
            eprintln!(
                "{} on {}: {} iterations, {} gradient calls, {} communications, residual {:.3e}",
                r.method, r.regime, r.iterations, r.grad_calls, r.communications, r.final_residual
            );
            emit(cfg.output.as_deref(), &experiment::rows_to_csv(&[outcome.row])?)
        }
        Command::Sweep(c) => {
            let cfg = load_experiment(&c)?;
            let out = experiment::run_sweep(&cfg)?;
            for (v, msg) in &out.failures {
                eprintln!("grid point {v}: {msg}");
            }
            emit(cfg.output.as_deref(), &experiment::rows_to_csv(&out.rows)?)?;
            let fit = out.fit?;
            let line = format!(
                "slope of {:?} vs {}: {:.4} +- {:.4} ({} points)",
                out.counter,
                out.parameter.name(),
                fit.slope,
                fit.stderr,
                fit.points
            );
            if cfg.output.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            Ok(())
        }
        Command::Spectrum(c) => {
            let cfg = load_experiment(&c)?;
            let prepared = experiment::prepare(&ExperimentConfig { precondition: false, ..cfg.clone() })?;
            let b = prepared.problem.spectral_bounds()?;
            let k = prepared.kappas;
            let mut text = String::new();
            text += &format!(
                "sigma_max_sq {:.6}\nsigma_min_plus_sq {:.6}\nkappa_B {:.6}\n",
                b.sigma_max_sq,
                b.sigma_min_plus_sq,
                b.kappa()
            );
            if cfg.precondition {
                let kb = spectral_bounds(&prepared.problem.chebyshev_preconditioned()?.b_plain)?;
                text += &format!("kappa_K {:.6}\n", kb.kappa());
            }
            text += &format!(
                "kappa_f {}\nkappa_W {}\nkappa_A_hat {}\nkappa_C {}\nkappa_Ct_hat_T {}\nkappa_AC_tilde {}\n",
                fmt_opt(k.kappa_f),
                fmt_opt(k.kappa_w),
                fmt_opt(k.kappa_a_hat),
                fmt_opt(k.kappa_c),
                fmt_opt(k.kappa_ct_hat_t),
                fmt_opt(k.kappa_ac_tilde)
            );
            emit(c.out.as_deref(), &text)
        }
        Command::Worstcase(c) => {
            let spec: WorstInstanceSpec = io::read_json(config_path(&c)?)?;
            let inst = worstcase::build_worst(&spec)?;
            for (name, target, measured) in &inst.measurements {
                eprintln!("{name}: target {target:.6}, measured {measured:.6}");
            }
            emit(c.out.as_deref(), &io::worst_instance_to_json(&spec, &inst)?)
        }
        Command::Check(c) => {
            let results = experiment::run_checks(c.seed.unwrap_or(0));
            let mut text = String::new();
            for r in &results {
                text += &format!("{} {}: {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            emit(c.out.as_deref(), &text)?;
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure { status: 1, message: format!("{failed} check(s) failed") });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status)
        }
    }
}
