//! Gradient calls against kappa_f on consensus instances, with a log-log slope fit.

use decopt::experiment::{
    rows_to_csv, run_sweep, CounterName, ExperimentConfig, InstanceSource, Regime, SweepConfig, SweepParam,
};
use decopt::problems::generate::InstanceSpec;
use decopt::Result;

fn main() -> Result<()> {
    let spec = InstanceSpec { n: 4, d: 0, d_tilde: 3, m: 0, common_basis: true, ..Default::default() };
    let mut cfg = ExperimentConfig::new(InstanceSource::Random(spec));
    cfg.regime = Regime::Consensus;
    cfg.sweep = Some(SweepConfig {
        parameter: SweepParam::KappaF,
        grid: vec![4.0, 16.0, 64.0, 256.0],
        counter: CounterName::GradCalls,
    });
    let out = run_sweep(&cfg)?;
    print!("{}", rows_to_csv(&out.rows)?);
    let fit = out.fit?;
    println!("slope {:.3} +- {:.3} (sqrt scaling predicts 0.5)", fit.slope, fit.stderr);
    Ok(())
}
