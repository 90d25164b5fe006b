//! Condition number of the two-weight minimizer with and without the
//! `−f⁻²` transformation, analytic against perturbation estimates.

use oed_precond::experiments::{
    log_grid, run_model_sweep, sweep_table, ExperimentConfig, ExperimentId,
};

fn main() -> oed_precond::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::ModelSweep);
    cfg.alphas = log_grid(1e-4, 1.0, 9);
    let rows = run_model_sweep(&cfg)?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
