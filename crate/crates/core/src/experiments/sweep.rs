use std::fmt::Write as _;
use std::io::Write;

use super::linear::check;
use super::{format_float, ExperimentConfig, ExperimentId};
use crate::error::Result;
use crate::model_problem::{
    analytic_condition_number, default_perturbation, empirical_condition_number, ModelProblem,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub kappa_analytic_u: f64,
    pub kappa_empirical_u: f64,
    pub kappa_analytic_p: f64,
    pub kappa_empirical_p: f64,
}

pub const SWEEP_HEADER: [&str; 5] = [
    "alpha",
    "kappa_analytic_u",
    "kappa_empirical_u",
    "kappa_analytic_p",
    "kappa_empirical_p",
];

/// Condition numbers of the model-problem minimizer on the configured grid.
/// An empirical estimate that fails to bracket its root is recorded as `NaN`.
pub fn run_model_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    check(cfg, ExperimentId::ModelSweep)?;
    cfg.alphas
        .iter()
        .map(|&alpha| {
            let u = ModelProblem::new(alpha, false)?;
            let p = ModelProblem::new(alpha, true)?;
            let empirical = |mp: &ModelProblem| {
                empirical_condition_number(mp, default_perturbation(mp)).unwrap_or(f64::NAN)
            };
            Ok(SweepRow {
                alpha,
                kappa_analytic_u: analytic_condition_number(&u),
                kappa_empirical_u: empirical(&u),
                kappa_analytic_p: analytic_condition_number(&p),
                kappa_empirical_p: empirical(&p),
            })
        })
        .collect()
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.alpha),
            format_float(r.kappa_analytic_u),
            format_float(r.kappa_empirical_u),
            format_float(r.kappa_analytic_p),
            format_float(r.kappa_empirical_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>14} {:>14} {:>10} {:>10}",
        "alpha", "kappa_u", "kappa_u_emp", "kappa_p", "kappa_p_emp"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10.3e} {:>14.6e} {:>14.6e} {:>10.6} {:>10.6}",
            r.alpha,
            r.kappa_analytic_u,
            r.kappa_empirical_u,
            r.kappa_analytic_p,
            r.kappa_empirical_p
        );
    }
    s
}
