//! Experiment runner: builds an instance, solves it with counters, sweeps a condition
//! number or accuracy over a grid and fits the log-log slope of an oracle count.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{self, MatrixFamily};
use crate::error::{Error, Result};
use crate::io::{self, Method, SolverConfig};
use crate::linalg::{self, Vector, RANK_TOL};
use crate::operators::{Counters, DEFAULT_DENSE_CAP};
use crate::problems::generate::{nonsmooth_consensus, random_instance, InstanceSpec, NonsmoothSpec};
use crate::problems::{self, AffineProblem, BuildOptions, MixedProblemData};
use crate::solvers::{self, RegularizedOptions, SolveReport, StopRule};
use crate::worstcase::{self, WorstInstanceSpec, WorstKind};

/// Where the instance comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// JSON instance file.
    File(PathBuf),
    /// Random quadratic instance drawn from the config seed.
    Random(InstanceSpec),
    Worstcase(WorstInstanceSpec),
    /// Scalar nonsmooth consensus drawn from the config seed.
    NonsmoothConsensus(NonsmoothSpec),
}

/// Reformulation applied to quadratic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Consensus,
    Shared,
    Coupled,
    CoupledLocal,
    Mixed,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Consensus => "consensus",
            Regime::Shared => "shared",
            Regime::Coupled => "coupled",
            Regime::CoupledLocal => "coupled_local",
            Regime::Mixed => "mixed",
        }
    }

    pub fn build(self, data: &MixedProblemData, opts: &BuildOptions) -> Result<AffineProblem> {
        match self {
            Regime::Consensus => problems::build_consensus(data, opts),
            Regime::Shared => problems::build_shared(data, opts),
            Regime::Coupled => problems::build_coupled(data, opts),
            Regime::CoupledLocal => problems::build_coupled_local(data, opts),
            Regime::Mixed => problems::build_mixed(data, opts),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "kappa_f")]
    KappaF,
    #[serde(rename = "kappa_W")]
    KappaW,
    #[serde(rename = "kappa_A_hat")]
    KappaAHat,
    #[serde(rename = "kappa_C")]
    KappaC,
    #[serde(rename = "kappa_AC_tilde")]
    KappaAcTilde,
    #[serde(rename = "eps")]
    Eps,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::KappaF => "kappa_f",
            SweepParam::KappaW => "kappa_W",
            SweepParam::KappaAHat => "kappa_A_hat",
            SweepParam::KappaC => "kappa_C",
            SweepParam::KappaAcTilde => "kappa_AC_tilde",
            SweepParam::Eps => "eps",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterName {
    GradCalls,
    MulA,
    MulC,
    MulCtilde,
    Communications,
    BForward,
    BAdjoint,
}

impl CounterName {
    pub fn get(self, c: &Counters) -> u64 {
        match self {
            CounterName::GradCalls => c.grad_calls,
            CounterName::MulA => c.mul_a,
            CounterName::MulC => c.mul_c,
            CounterName::MulCtilde => c.mul_ctilde,
            CounterName::Communications => c.communications,
            CounterName::BForward => c.b_forward,
            CounterName::BAdjoint => c.b_adjoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub parameter: SweepParam,
    pub grid: Vec<f64>,
    pub counter: CounterName,
}

fn default_true() -> bool {
    true
}

fn default_target() -> f64 {
    1e-8
}

/// One experiment: an instance, a reformulation, a solver and optionally a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default = "default_true")]
    pub chebyshev_gossip: bool,
    #[serde(default = "default_true")]
    pub chebyshev_local: bool,
    /// Replace the assembled B by its outer Chebyshev polynomial before solving.
    #[serde(default = "default_true")]
    pub precondition: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Relative distance to the dense solution at which APAPC stops.
    #[serde(default = "default_target")]
    pub target_accuracy: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fills the wall_time column; rows are then no longer reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_regime() -> Regime {
    Regime::Mixed
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSource) -> Self {
        Self {
            instance,
            regime: Regime::Mixed,
            chebyshev_gossip: true,
            chebyshev_local: true,
            precondition: true,
            solver: SolverConfig::default(),
            sweep: None,
            target_accuracy: default_target(),
            seed: 0,
            output: None,
            record_wall_time: false,
        }
    }

    /// Reads a JSON config; a relative instance path is taken relative to the config file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut cfg: Self = io::read_json(path)?;
        if let InstanceSource::File(p) = &mut cfg.instance {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// The config with `param` set to `value`.
    pub fn with_parameter(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let unsupported =
            || Error::invalid(format!("sweeping {} is not supported for this instance source", param.name()));
        match (&mut cfg.instance, param) {
            (_, SweepParam::Eps) => {
                cfg.solver.eps = value;
                if cfg.solver.method == Method::Apapc {
                    cfg.target_accuracy = value;
                }
            }
            (InstanceSource::Random(s), SweepParam::KappaF) => {
                s.mu = 1.0;
                s.l = value;
            }
            (InstanceSource::Random(s), SweepParam::KappaW) => s.kappa_w = Some(value),
            (InstanceSource::Random(s), SweepParam::KappaAHat) => s.a_kappa = Some(value),
            (InstanceSource::Random(s), SweepParam::KappaC) => s.c_kappa = Some(value),
            (InstanceSource::Worstcase(s), SweepParam::KappaF) => s.kappa_f = value,
            (InstanceSource::Worstcase(s), SweepParam::KappaW) => s.kappa_w = Some(value),
            (InstanceSource::Worstcase(s), SweepParam::KappaC) => s.kappa_c = value,
            (InstanceSource::Worstcase(s), SweepParam::KappaAcTilde) if s.kind == WorstKind::CoupledLocal => {
                s.kappa_a = Some(value)
            }
            (InstanceSource::NonsmoothConsensus(s), SweepParam::KappaW) => s.kappa_w = Some(value),
            _ => return Err(unsupported()),
        }
        Ok(cfg)
    }
}

/// Condition numbers measured on the instance data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub kappa_f: Option<f64>,
    pub kappa_w: Option<f64>,
    pub kappa_a_hat: Option<f64>,
    pub kappa_c: Option<f64>,
    pub kappa_ct_hat_t: Option<f64>,
    pub kappa_ac_tilde: Option<f64>,
}

pub fn measure_kappas(data: &MixedProblemData) -> Result<Kappas> {
    let (mu, l) = data.objective_constants()?;
    let (wmax, wmin) = linalg::psd_extreme_eigenvalues(&data.w, RANK_TOL);
    let fam = |blocks: &[crate::linalg::Matrix]| MatrixFamily::new(blocks.to_vec());
    let mut k = Kappas {
        kappa_f: l.filter(|_| mu > 0.0).map(|l| l / mu),
        kappa_w: (wmin > 0.0).then(|| wmax / wmin),
        ..Default::default()
    };
    if data.has_coupled() {
        k.kappa_a_hat = conditioning::mixed_condition_number(&fam(&data.a)?, false).ok();
    }
    if data.has_local() {
        let (max, min) = linalg::sigma_bounds(&linalg::block_diag(&data.c), RANK_TOL);
        k.kappa_c = (min > 0.0).then(|| max / min);
        if data.has_coupled() {
            k.kappa_ac_tilde =
                conditioning::projected_condition_number(&fam(&data.a)?, &fam(&data.c)?).ok().map(|p| p.1);
        }
    }
    if data.has_shared() {
        k.kappa_ct_hat_t = conditioning::mixed_condition_number(&fam(&data.c_tilde)?, true).ok();
    }
    Ok(k)
}

/// One CSV line. Column order is the header order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub grid_index: usize,
    pub parameter: String,
    pub value: Option<f64>,
    pub regime: String,
    pub method: String,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub eps: f64,
    pub target_accuracy: f64,
    pub kappa_f: Option<f64>,
    pub kappa_w: Option<f64>,
    pub kappa_a_hat: Option<f64>,
    pub kappa_c: Option<f64>,
    pub kappa_ct_hat_t: Option<f64>,
    pub kappa_ac_tilde: Option<f64>,
    pub kappa_b: f64,
    pub iterations: usize,
    pub grad_calls: u64,
    pub mul_a: u64,
    pub mul_c: u64,
    pub mul_ctilde: u64,
    pub communications: u64,
    pub b_forward: u64,
    pub b_adjoint: u64,
    pub final_distance: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_residual: f64,
    pub converged: bool,
    pub wall_time: Option<f64>,
}

pub struct RunOutcome {
    pub report: SolveReport,
    pub row: CsvRow,
}

/// An instance ready to solve, with what the CSV row needs to know about it.
pub struct Prepared {
    pub problem: AffineProblem,
    pub kappas: Kappas,
    pub n: usize,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Apapc => "apapc",
        Method::ApapcRegularized => "apapc_regularized",
        Method::Sliding => "sliding",
        Method::SlidingRestart => "sliding_restart",
    }
}

/// Loads or generates the instance data named by the config.
pub fn instance_data(cfg: &ExperimentConfig) -> Result<MixedProblemData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match &cfg.instance {
        InstanceSource::File(path) => io::read_instance(path),
        InstanceSource::Random(spec) => Ok(random_instance(&mut rng, spec)?.0),
        InstanceSource::Worstcase(spec) => Ok(worstcase::build_worst(spec)?.data),
        InstanceSource::NonsmoothConsensus(_) => {
            Err(Error::invalid("nonsmooth consensus instances have no quadratic data"))
        }
    }
}

/// Builds the problem to be solved: reformulated, preconditioned, with a dense hint
/// whenever the objective is quadratic and small enough.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    if let InstanceSource::NonsmoothConsensus(spec) = &cfg.instance {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let problem = nonsmooth_consensus(&mut rng, spec)?;
        let w = problem.b_plain.to_dense();
        let (wmax, wmin) = linalg::psd_extreme_eigenvalues(&w, RANK_TOL);
        let kappas = Kappas { kappa_w: Some(wmax / wmin), ..Default::default() };
        let n = w.nrows();
        return Ok(Prepared { problem, kappas, n });
    }
    let data = instance_data(cfg)?;
    let kappas = measure_kappas(&data)?;
    let opts =
        BuildOptions { chebyshev_gossip: cfg.chebyshev_gossip, chebyshev_local: cfg.chebyshev_local, counters: None };
    let mut problem = cfg.regime.build(&data, &opts)?;
    if cfg.precondition {
        problem = problem.chebyshev_preconditioned()?;
    }
    if problem.objective.quadratic_form().is_some() && problem.layout.dim <= DEFAULT_DENSE_CAP {
        if let Ok(hint) = problem.dense_solution() {
            problem.solution_hint = Some(hint);
        }
    }
    Ok(Prepared { problem, kappas, n: data.n })
}

/// R: the configured value, else the distance from the origin to the solution hint.
fn radius(cfg: &ExperimentConfig, problem: &AffineProblem) -> Result<f64> {
    if let Some(r) = cfg.solver.r {
        return Ok(r);
    }
    problem
        .solution_hint
        .as_ref()
        .map(|h| h.norm().max(f64::MIN_POSITIVE.sqrt()))
        .ok_or_else(|| Error::invalid("R must be given in the solver config when no dense solution is available"))
}

/// Runs the configured solver on a prepared problem.
pub fn solve_prepared(cfg: &ExperimentConfig, problem: &AffineProblem) -> Result<SolveReport> {
    let s = &cfg.solver;
    let dim = problem.objective.dim();
    match s.method {
        Method::Apapc => {
            let c = problem.objective.constants();
            let l = c.l.ok_or_else(|| Error::invalid("apapc needs a smooth objective"))?;
            let mut params = solvers::apapc_params(c.mu, l, problem.spectral_bounds()?)?;
            if let Some(m) = s.max_iters {
                params.n = m;
            }
            let stop = match (&problem.solution_hint, s.tol) {
                (_, Some(tol)) => StopRule { tol: Some(tol), target_distance: None },
                (Some(h), None) => {
                    StopRule { tol: None, target_distance: Some(cfg.target_accuracy * h.norm().max(1.0)) }
                }
                (None, None) => StopRule { tol: Some(cfg.target_accuracy), target_distance: None },
            };
            let report = solvers::apapc_with(problem, &params, &Vector::zeros(dim), &stop)?;
            if !report.converged {
                return Err(Error::NotConverged { iterations: report.iterations });
            }
            Ok(report)
        }
        Method::ApapcRegularized => {
            let opts = RegularizedOptions { d: None, u0: None, max_iters: s.max_iters };
            let report = solvers::solve_convex_regularized(problem, s.eps, radius(cfg, problem)?, &opts)?;
            if !report.converged {
                return Err(Error::NotConverged { iterations: report.iterations });
            }
            Ok(report)
        }
        Method::Sliding => {
            let mut sc = s.schedule_overrides.clone();
            if s.max_iters.is_some() {
                sc.max_outer = s.max_iters;
            }
            solvers::gradient_sliding(problem, s.eps, radius(cfg, problem)?, &sc)
        }
        Method::SlidingRestart => {
            let mu = problem.objective.constants().mu;
            let r = match (s.r, problem.objective.domain()) {
                (Some(r), _) => r,
                (None, Some(d)) => d.max_norm(),
                (None, None) => return Err(Error::invalid("restarted sliding needs a box domain")),
            };
            solvers::restarted_sliding(problem, s.eps, mu, r, &s.schedule_overrides)
        }
    }
}

fn make_row(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    report: &SolveReport,
    grid: Option<(usize, SweepParam, f64)>,
) -> Result<CsvRow> {
    let p = &prepared.problem;
    let k = prepared.kappas;
    let c = report.counters;
    let (grid_index, parameter, value) = match grid {
        Some((i, param, v)) => (i, param.name().to_string(), Some(v)),
        None => (0, String::new(), None),
    };
    let regime = match cfg.instance {
        InstanceSource::NonsmoothConsensus(_) => "consensus",
        _ => cfg.regime.name(),
    };
    let gap = p
        .counters
        .uncounted(|| p.solution_hint.as_ref().map(|h| p.objective.value(&report.final_point) - p.objective.value(h)));
    Ok(CsvRow {
        grid_index,
        parameter,
        value,
        regime: regime.to_string(),
        method: method_name(cfg.solver.method).to_string(),
        seed: cfg.seed,
        n: prepared.n,
        dim: p.layout.dim,
        eps: cfg.solver.eps,
        target_accuracy: cfg.target_accuracy,
        kappa_f: k.kappa_f,
        kappa_w: k.kappa_w,
        kappa_a_hat: k.kappa_a_hat,
        kappa_c: k.kappa_c,
        kappa_ct_hat_t: k.kappa_ct_hat_t,
        kappa_ac_tilde: k.kappa_ac_tilde,
        kappa_b: p.spectral_bounds()?.kappa(),
        iterations: report.iterations,
        grad_calls: c.grad_calls,
        mul_a: c.mul_a,
        mul_c: c.mul_c,
        mul_ctilde: c.mul_ctilde,
        communications: c.communications,
        b_forward: c.b_forward,
        b_adjoint: c.b_adjoint,
        final_distance: p.solution_hint.as_ref().map(|h| (&report.final_point - h).norm()),
        final_gap: gap,
        final_residual: p.residual(&report.final_point),
        converged: report.converged,
        wall_time: cfg.record_wall_time.then_some(report.wall_time),
    })
}

fn run_one(cfg: &ExperimentConfig, grid: Option<(usize, SweepParam, f64)>) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let report = solve_prepared(cfg, &prepared.problem)?;
    let row = make_row(cfg, &prepared, &report, grid)?;
    Ok(RunOutcome { report, row })
}

/// One solve and its CSV row.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_one(cfg, None)
}

/// Least-squares line through (log x, log y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for an exact fit).
    pub stderr: f64,
    pub points: usize,
}

/// Fits log(y) = intercept + slope log(x). Needs at least 4 positive points.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len();
    if n < 4 {
        return Err(Error::FitRefused(format!("need at least 4 positive points, got {n}")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::FitRefused("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, intercept, stderr, points: n })
}

pub struct SweepOutcome {
    pub rows: Vec<CsvRow>,
    pub fit: Result<SlopeFit>,
    /// Grid points whose solve failed, with the error message.
    pub failures: Vec<(f64, String)>,
    pub counter: CounterName,
    pub parameter: SweepParam,
}

/// Runs every grid point and fits the slope of the chosen counter against the
/// swept value. Failed points are reported, not fatal; the fit needs 4 successes.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::invalid("config has no sweep section"))?;
    if sweep.grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sweep grid must be strictly increasing"));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, &v) in sweep.grid.iter().enumerate() {
        let point = cfg.with_parameter(sweep.parameter, v)?;
        match run_one(&point, Some((i, sweep.parameter, v))) {
            Ok(out) => rows.push(out.row),
            Err(e) if e.is_solver_failure() => failures.push((v, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let xs: Vec<f64> = rows.iter().filter_map(|r| r.value).collect();
    let ys: Vec<f64> = rows.iter().map(|r| counter_of_row(r, sweep.counter) as f64).collect();
    let fit = fit_loglog(&xs, &ys);
    Ok(SweepOutcome { rows, fit, failures, counter: sweep.counter, parameter: sweep.parameter })
}

fn counter_of_row(r: &CsvRow, c: CounterName) -> u64 {
    let counters = Counters {
        grad_calls: r.grad_calls,
        mul_a: r.mul_a,
        mul_c: r.mul_c,
        mul_ctilde: r.mul_ctilde,
        communications: r.communications,
        b_forward: r.b_forward,
        b_adjoint: r.b_adjoint,
    };
    c.get(&counters)
}

/// CSV text with a fixed header; wall_time stays empty unless it was recorded.
pub fn rows_to_csv(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(csv_header())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn csv_header() -> [&'static str; 30] {
    [
        "grid_index",
        "parameter",
        "value",
        "regime",
        "method",
        "seed",
        "n",
        "dim",
        "eps",
        "target_accuracy",
        "kappa_f",
        "kappa_w",
        "kappa_a_hat",
        "kappa_c",
        "kappa_ct_hat_t",
        "kappa_ac_tilde",
        "kappa_b",
        "iterations",
        "grad_calls",
        "mul_a",
        "mul_c",
        "mul_ctilde",
        "communications",
        "b_forward",
        "b_adjoint",
        "final_distance",
        "final_gap",
        "final_residual",
        "converged",
        "wall_time",
    ]
}

/// Outcome of one built-in invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

/// A fast invariant suite over small random instances drawn from `seed`.
pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    use crate::network::{self, Topology};
    use crate::operators;
    use rand::Rng;

    let mixed_spec = InstanceSpec { n: 3, d: 3, d_tilde: 2, m: 2, p: 1, p_tilde: 1, ..Default::default() };
    let mut out = Vec::new();

    out.push(check("gossip matrices", || {
        let mut bad = Vec::new();
        for t in [Topology::Path, Topology::Cycle, Topology::Star, Topology::Complete] {
            if !network::standard_topology(t, 5)?.check().passed() {
                bad.push(format!("{t:?}"));
            }
        }
        let g = network::path_for_kappa(50.0)?;
        let rel = (g.kappa() - 50.0).abs() / 50.0;
        Ok((bad.is_empty() && rel <= 1e-8, format!("failing: {bad:?}, path_for_kappa(50) rel err {rel:.1e}")))
    }));

    out.push(check("adjoint consistency", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, _, _) = random_instance(&mut rng, &mixed_spec)?;
        let p = problems::build_mixed(&data, &BuildOptions::default())?.chebyshev_preconditioned()?;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let u = problems::generate::gaussian_vector(&mut rng, p.b_plain.cols());
            let v = problems::generate::gaussian_vector(&mut rng, p.b_plain.rows());
            let err = (p.b_plain.apply(&u).dot(&v) - u.dot(&p.b_plain.adjoint(&v))).abs() / (u.norm() * v.norm());
            worst = worst.max(err);
        }
        Ok((worst <= 1e-10, format!("max relative error {worst:.1e}")))
    }));

    out.push(check("chebyshev compression", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kappa = 10f64.powf(rng.random_range(1.0..4.0));
        let b = problems::generate::matrix_with_kappa(&mut rng, 4, 7, kappa);
        let op = operators::LinearOperator::dense(b.clone(), operators::Tag::Other);
        let bounds = operators::spectral_bounds(&op)?;
        let (k, _) = conditioning::chebyshev_operator(&op, &Vector::zeros(4), bounds);
        let kb = operators::spectral_bounds(&k)?;
        let out_b = conditioning::chebyshev_output_bounds();
        let tol = 1e-9;
        let ok = kb.sigma_max_sq <= out_b.sigma_max_sq * (1.0 + tol)
            && kb.sigma_min_plus_sq >= out_b.sigma_min_plus_sq * (1.0 - tol);
        let degree = conditioning::chebyshev_degree(bounds);
        let expected = (bounds.kappa().sqrt().ceil() as usize).max(1);
        Ok((ok && degree == expected, format!("kappa_B {kappa:.1}, degree {degree}, kappa(K) {:.3}", kb.kappa())))
    }));

    out.push(check("apapc matches dense reference", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, _, _) = random_instance(&mut rng, &mixed_spec)?;
        let reference = problems::reference_solution(&data)?;
        let p =
            problems::build_mixed(&data, &BuildOptions::default())?.chebyshev_preconditioned()?.with_dense_hint()?;
        let c = p.objective.constants();
        let params = solvers::apapc_params(c.mu, c.l.unwrap_or(f64::INFINITY), p.spectral_bounds()?)?;
        let hint_norm = p.solution_hint.as_ref().map_or(1.0, |h| h.norm().max(1.0));
        let stop = StopRule { tol: None, target_distance: Some(1e-9 * hint_norm) };
        let r = solvers::apapc_with(&p, &params, &Vector::zeros(p.layout.dim), &stop)?;
        let mut err: f64 = 0.0;
        for i in 0..data.n {
            err = err.max(linalg::rel_dist(&p.layout.x_part(&r.final_point, i), &reference.x[i]));
            err = err.max(linalg::rel_dist(&p.layout.x_tilde_part(&r.final_point, i), &reference.x_tilde));
        }
        Ok((r.converged && err <= 1e-6, format!("{} iterations, max relative error {err:.1e}", r.iterations)))
    }));

    out.push(check("counter accounting", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, _, _) = random_instance(&mut rng, &mixed_spec)?;
        let p = problems::build_mixed(&data, &BuildOptions::default())?;
        let c = p.objective.constants();
        let mut params = solvers::apapc_params(c.mu, c.l.unwrap_or(f64::INFINITY), p.spectral_bounds()?)?;
        params.n = 7;
        let r = solvers::apapc(&p, &params, &Vector::zeros(p.layout.dim))?;
        let k = r.counters;
        // Per step: one gradient, one B and one B^T. B touches A, C (through its Chebyshev
        // polynomial), C~ and the gossip part of both y and x~; the penalty gradient
        // touches A and the gossip part of y once each way.
        let (gd, ld) = (p.info.gossip_degree as u64, p.info.local_degree as u64);
        let ok = k.grad_calls == 7
            && k.b_forward == 7
            && k.b_adjoint == 7
            && k.mul_a == 7 * 4
            && k.mul_c == 7 * 4 * ld
            && k.mul_ctilde == 7 * 2
            && k.communications == 7 * 6 * gd;
        Ok((ok, format!("{k:?}")))
    }));

    out.push(check("instance json round trip", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, _, _) = random_instance(&mut rng, &mixed_spec)?;
        let text = io::instance_to_json(&data)?;
        let again = io::instance_to_json(&io::instance_from_json(&text)?)?;
        Ok((text == again, format!("{} bytes", text.len())))
    }));

    out.push(check("worst-case targets", || {
        let spec = WorstInstanceSpec { truncation: 16, ..Default::default() };
        let w = worstcase::build_worst(&spec)?;
        let worst = w.measurements.iter().map(|(_, t, m)| (t - m).abs() / t.abs().max(1.0)).fold(0.0, f64::max);
        Ok((worst <= 1e-8, format!("max relative deviation {worst:.1e} over {} targets", w.measurements.len())))
    }));

    out.push(check("determinism", || {
        let mut cfg = ExperimentConfig::new(InstanceSource::Random(mixed_spec.clone()));
        cfg.seed = seed;
        let a = rows_to_csv(&[run_solve(&cfg)?.row])?;
        let b = rows_to_csv(&[run_solve(&cfg)?.row])?;
        Ok((a == b, format!("{} bytes", a.len())))
    }));
    out
}
