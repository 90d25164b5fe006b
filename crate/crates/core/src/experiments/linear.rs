use std::fmt::Write as _;

use rayon::prelude::*;

use super::record::ContentHash;
use super::stats::{mean, sample_std};
use super::{
    ExperimentConfig, ExperimentId, TrialRecord, Variant, EXP1_CANDIDATES, LINEAR_BUDGET,
    LINEAR_PARAMS, MATRIX_CONDITION,
};
use crate::criterion::{DesignNlp, DesignProblem, InformationEval};
use crate::dense::{norm_inf, random_design_matrix, DenseMatrix, RngStream};
use crate::error::{Error, Result};
use crate::qp::project_feasible;
use crate::sqp::{self, Nlp, SqpStatus};

struct Run {
    x: Vec<f64>,
    iterations: usize,
    qp_iterations: usize,
    status: SqpStatus,
    trace: f64,
}

fn solve_fixed(
    j: &DenseMatrix,
    alpha: Option<f64>,
    variant: Variant,
    x0: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Run> {
    let problem =
        DesignProblem::fixed(j.clone(), LINEAR_BUDGET, alpha, variant.is_preconditioned())?;
    let mut nlp = DesignNlp::new(problem);
    let report = sqp::solve(&mut nlp, x0, &cfg.sqp)?;
    let trace = InformationEval::new(j, &report.x, alpha).map_or(f64::NAN, |e| e.trace());
    Ok(Run {
        x: report.x,
        iterations: report.iterations,
        qp_iterations: report.qp_iterations,
        status: report.status,
        trace,
    })
}

/// The less successful of two statuses.
fn worse(a: SqpStatus, b: SqpStatus) -> SqpStatus {
    let rank = |s| match s {
        SqpStatus::Converged => 0,
        SqpStatus::MaxIterations => 1,
        SqpStatus::EvaluationFailure => 2,
        SqpStatus::QpIterationLimit => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Fills `speedup = k_u / k_p` on both rows of every u/p pair in `group`.
fn pair_speedups(group: &mut [TrialRecord]) {
    let ku = group
        .iter()
        .find(|r| r.variant == Variant::Unpreconditioned)
        .map(|r| r.iterations);
    let kp = group
        .iter()
        .find(|r| r.variant == Variant::Preconditioned)
        .map(|r| r.iterations);
    if let (Some(ku), Some(kp)) = (ku, kp) {
        let s = ku as f64 / kp.max(1) as f64;
        group.iter_mut().for_each(|r| r.speedup = Some(s));
    }
}

/// The two starting guesses: the first `m_max` weights at one, and the reverse.
pub(crate) fn exp1_starts(m: usize, m_max: usize) -> [Vec<f64>; 2] {
    let first = (0..m).map(|i| if i < m_max { 1.0 } else { 0.0 }).collect();
    let last = (0..m)
        .map(|i| if i >= m - m_max { 1.0 } else { 0.0 })
        .collect();
    [first, last]
}

/// Per-`(α, variant)` aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Row {
    pub alpha: f64,
    pub variant: Variant,
    pub runs: usize,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub mean_distance: f64,
    /// Fraction of instances not reported as converged.
    pub failure_fraction: f64,
    pub qp_limit_count: usize,
}

#[derive(Debug, Clone)]
pub struct Exp1Outcome {
    pub records: Vec<TrialRecord>,
    pub rows: Vec<Exp1Row>,
}

impl Exp1Outcome {
    pub fn row(&self, alpha: f64, variant: Variant) -> Option<&Exp1Row> {
        self.rows
            .iter()
            .find(|r| r.alpha == alpha && r.variant == variant)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>10} {:>3} {:>5} {:>9} {:>9} {:>12} {:>8} {:>7}",
            "alpha", "var", "runs", "mean_it", "std_it", "mean_dist", "fail_%", "qp_lim"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>10.3e} {:>3} {:>5} {:>9.2} {:>9.2} {:>12.4e} {:>8.1} {:>7}",
                r.alpha,
                r.variant,
                r.runs,
                r.mean_iterations,
                r.std_iterations,
                r.mean_distance,
                100.0 * r.failure_fraction,
                r.qp_limit_count
            );
        }
        s
    }
}

/// Prior-information sweep: every matrix is solved for every `α` and variant
/// from both starting guesses.
pub fn run_exp1(cfg: &ExperimentConfig) -> Result<Exp1Outcome> {
    check(cfg, ExperimentId::Exp1)?;
    let root = RngStream::new(cfg.seed);
    let (m, n, m_max) = (EXP1_CANDIDATES, LINEAR_PARAMS, LINEAR_BUDGET);
    let starts = exp1_starts(m, m_max);

    let per_trial: Vec<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<TrialRecord>> {
            let mut rng = root.split(t as u64);
            let j = random_design_matrix(m, n, MATRIX_CONDITION, true, &mut rng)?;
            let mut out = Vec::new();
            for &alpha in &cfg.alphas {
                let hash = ContentHash::new("exp1")
                    .floats(j.as_slice())
                    .floats(&[alpha])
                    .floats(&starts[0])
                    .floats(&starts[1])
                    .finish();
                let mut group = Vec::new();
                for &variant in cfg.precondition.variants() {
                    let a = solve_fixed(&j, Some(alpha), variant, &starts[0], cfg)?;
                    let b = solve_fixed(&j, Some(alpha), variant, &starts[1], cfg)?;
                    let diff: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect();
                    group.push(TrialRecord {
                        experiment: ExperimentId::Exp1,
                        trial: t,
                        alpha: Some(alpha),
                        size: None,
                        variant,
                        iterations: a.iterations.max(b.iterations),
                        qp_iterations: a.qp_iterations + b.qp_iterations,
                        status: worse(a.status, b.status),
                        objective: a.trace,
                        distance: Some(norm_inf(&diff)),
                        speedup: None,
                        content_hash: hash.clone(),
                    });
                }
                pair_speedups(&mut group);
                out.extend(group);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &alpha in &cfg.alphas {
        for &variant in cfg.precondition.variants() {
            let sel: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.alpha == Some(alpha) && r.variant == variant)
                .collect();
            let its: Vec<f64> = sel.iter().map(|r| r.iterations as f64).collect();
            let dist: Vec<f64> = sel.iter().filter_map(|r| r.distance).collect();
            let failures = sel
                .iter()
                .filter(|r| r.status != SqpStatus::Converged)
                .count();
            rows.push(Exp1Row {
                alpha,
                variant,
                runs: sel.len(),
                mean_iterations: mean(&its),
                std_iterations: sample_std(&its),
                mean_distance: mean(&dist),
                failure_fraction: failures as f64 / sel.len() as f64,
                qp_limit_count: sel
                    .iter()
                    .filter(|r| r.status == SqpStatus::QpIterationLimit)
                    .count(),
            });
        }
    }
    Ok(Exp1Outcome { records, rows })
}

/// Per-`(n, variant)` aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Row {
    pub size: usize,
    pub variant: Variant,
    pub runs: usize,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct Exp2Outcome {
    pub records: Vec<TrialRecord>,
    pub rows: Vec<Exp2Row>,
}

impl Exp2Outcome {
    pub fn row(&self, size: usize, variant: Variant) -> Option<&Exp2Row> {
        self.rows
            .iter()
            .find(|r| r.size == size && r.variant == variant)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>5} {:>3} {:>5} {:>9} {:>9} {:>6}",
            "n", "m", "var", "runs", "mean_it", "std_it", "fails"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>4} {:>5} {:>3} {:>5} {:>9.2} {:>9.2} {:>6}",
                r.size,
                EXP1_CANDIDATES * r.size,
                r.variant,
                r.runs,
                r.mean_iterations,
                r.std_iterations,
                r.failures
            );
        }
        s
    }
}

/// Problem-size sweep over `50n × 7` matrices without prior information,
/// started from the projected uniform design.
pub fn run_exp2(cfg: &ExperimentConfig) -> Result<Exp2Outcome> {
    check(cfg, ExperimentId::Exp2)?;
    let root = RngStream::new(cfg.seed);
    let tasks: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();

    let per_task: Vec<Vec<TrialRecord>> = tasks
        .par_iter()
        .map(|&(size, t)| -> Result<Vec<TrialRecord>> {
            let m = EXP1_CANDIDATES * size;
            let mut rng = root.split(size as u64).split(t as u64);
            let j = random_design_matrix(m, LINEAR_PARAMS, MATRIX_CONDITION, false, &mut rng)?;
            let probe =
                DesignNlp::new(DesignProblem::fixed(j.clone(), LINEAR_BUDGET, None, false)?);
            let uniform = vec![LINEAR_BUDGET as f64 / m as f64; m];
            let x0 = project_feasible(
                probe.equality().as_ref(),
                probe.lower_bounds(),
                probe.upper_bounds(),
                &uniform,
            )?;
            let hash = ContentHash::new("exp2")
                .floats(j.as_slice())
                .floats(&x0)
                .finish();
            let mut group = Vec::new();
            for &variant in cfg.precondition.variants() {
                let run = solve_fixed(&j, None, variant, &x0, cfg)?;
                group.push(TrialRecord {
                    experiment: ExperimentId::Exp2,
                    trial: t,
                    alpha: None,
                    size: Some(size),
                    variant,
                    iterations: run.iterations,
                    qp_iterations: run.qp_iterations,
                    status: run.status,
                    objective: run.trace,
                    distance: None,
                    speedup: None,
                    content_hash: hash.clone(),
                });
            }
            pair_speedups(&mut group);
            Ok(group)
        })
        .collect::<Result<_>>()?;
    let records: Vec<TrialRecord> = per_task.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        for &variant in cfg.precondition.variants() {
            let sel: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.size == Some(size) && r.variant == variant)
                .collect();
            let its: Vec<f64> = sel.iter().map(|r| r.iterations as f64).collect();
            rows.push(Exp2Row {
                size,
                variant,
                runs: sel.len(),
                mean_iterations: mean(&its),
                std_iterations: sample_std(&its),
                failures: sel
                    .iter()
                    .filter(|r| r.status != SqpStatus::Converged)
                    .count(),
            });
        }
    }
    Ok(Exp2Outcome { records, rows })
}

pub(crate) fn check(cfg: &ExperimentConfig, expected: ExperimentId) -> Result<()> {
    if cfg.experiment != expected {
        return Err(Error::Config(format!(
            "configuration is for {}, not {expected}",
            cfg.experiment
        )));
    }
    cfg.validate()
}
