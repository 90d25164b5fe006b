use std::fmt::{self, Write as _};
use std::io::Write;

use rayon::prelude::*;

use super::linear::check;
use super::record::ContentHash;
use super::stats::{mean, sample_std};
use super::{format_float, ExperimentConfig, ExperimentId, TrialRecord, Variant, FHN_BUDGET};
use crate::criterion::{ControlledJacobian, DesignNlp, DesignProblem, InformationEval};
use crate::dense::RngStream;
use crate::error::Result;
use crate::fhn::{
    initial_guess_filter, integrate_with_sensitivities, FhnJacobian, FhnModel,
    SensitivityTrajectory, Tolerances, CONTROL_BOUNDS, DEFAULT_FILTER_THRESHOLD, NUM_CONTROLS,
    NUM_PARAMS,
};
use crate::sqp::{self, SqpStatus};

/// Weights above this count as selected measurements in the export.
const SELECTED_WEIGHT: f64 = 1e-6;
/// Spacing of the exported trajectory.
const TRAJECTORY_SPACING: f64 = 0.25;

/// Performance summary over the paired repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    /// Repeats where the preconditioned run needed fewer iterations.
    pub score: usize,
    pub repeats: usize,
    pub mean_kp: f64,
    pub mean_ku: f64,
    /// Mean of the per-repeat ratios `k_u / k_p`.
    pub mean_ratio: f64,
    /// Sample standard deviation of those ratios.
    pub sigma: f64,
}

impl fmt::Display for Table1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>7} {:>9} {:>9} {:>9} {:>7}",
            "score", "<k_p>", "<k_u>", "<k_u/k_p>", "sigma"
        )?;
        writeln!(
            f,
            "{:>7} {:>9.1} {:>9.1} {:>9.2} {:>7.2}",
            format!("{}:{}", self.score, self.repeats - self.score),
            self.mean_kp,
            self.mean_ku,
            self.mean_ratio,
            self.sigma
        )
    }
}

/// Optimal controls and selected measurements of the best preconditioned run.
#[derive(Debug, Clone)]
pub struct DesignExport {
    pub trial: usize,
    pub variant: Variant,
    pub status: SqpStatus,
    pub controls: [f64; NUM_CONTROLS],
    /// `Tr(M⁻¹)` at the design.
    pub objective: f64,
    /// `(time, observed component (1 or 2), weight)` for every selected candidate.
    pub measurements: Vec<(f64, usize, f64)>,
    pub trajectory: SensitivityTrajectory,
}

impl DesignExport {
    /// Key-value header lines followed by the selected measurements.
    pub fn write_design_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["key", "value"])?;
        w.write_record(["trial".to_string(), self.trial.to_string()])?;
        w.write_record(["variant", self.variant.code()])?;
        w.write_record(["status", self.status.as_str()])?;
        for (name, v) in ["I", "x01", "x02"].iter().zip(self.controls) {
            w.write_record([name.to_string(), format_float(v)])?;
        }
        w.write_record(["objective".to_string(), format_float(self.objective)])?;
        w.write_record(["t", "component", "weight"])?;
        for &(t, c, wt) in &self.measurements {
            w.write_record([format_float(t), c.to_string(), format_float(wt)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        self.trajectory.write_csv(out, false)
    }
}

#[derive(Debug, Clone)]
pub struct Exp3Outcome {
    pub records: Vec<TrialRecord>,
    /// Present when both variants ran.
    pub table: Option<Table1>,
    pub design: Option<DesignExport>,
}

impl Exp3Outcome {
    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(
                s,
                "repeat {} {}: {} iterations, {}, Tr(M^-1) = {:.6e}",
                r.trial,
                r.variant,
                r.iterations,
                r.status.as_str(),
                r.objective
            );
        }
        if let Some(t) = &self.table {
            let _ = write!(s, "\n{t}");
        }
        if let Some(d) = &self.design {
            let _ = writeln!(
                s,
                "\nbest design (repeat {}, {}): I = {:.6}, x01 = {:.6}, x02 = {:.6}, Tr(M^-1) = {:.6e}, {} measurements",
                d.trial,
                d.variant,
                d.controls[0],
                d.controls[1],
                d.controls[2],
                d.objective,
                d.measurements.len()
            );
        }
        s
    }
}

struct Run {
    trial: usize,
    variant: Variant,
    x: Vec<f64>,
    iterations: usize,
    qp_iterations: usize,
    status: SqpStatus,
    trace: f64,
}

/// FitzHugh-Nagumo design: each repeat draws filtered initial controls, starts
/// from equal weights and solves both variants from that point.
pub fn run_exp3(cfg: &ExperimentConfig) -> Result<Exp3Outcome> {
    check(cfg, ExperimentId::Exp3)?;
    let tol = Tolerances::default();
    let model = FhnModel::new(cfg.num_times, [0.0; NUM_CONTROLS]);
    let m = model.num_candidates();
    let root = RngStream::new(cfg.seed);

    let starts: Vec<[f64; NUM_CONTROLS]> = (0..cfg.trials)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.split(r as u64);
            initial_guess_filter(&model, &mut rng, DEFAULT_FILTER_THRESHOLD, &tol)
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, Variant)> = (0..cfg.trials)
        .flat_map(|r| cfg.precondition.variants().iter().map(move |&v| (r, v)))
        .collect();
    let runs: Vec<Run> = tasks
        .par_iter()
        .map(|&(r, variant)| -> Result<Run> {
            let provider = FhnJacobian::new(model.clone(), tol);
            let problem = DesignProblem::controlled(
                Box::new(provider.clone()),
                m,
                NUM_PARAMS,
                FHN_BUDGET,
                None,
                CONTROL_BOUNDS.to_vec(),
                variant.is_preconditioned(),
            )?;
            let mut x0 = vec![FHN_BUDGET as f64 / m as f64; m];
            x0.extend(starts[r]);
            let mut nlp = DesignNlp::new(problem);
            let report = sqp::solve(&mut nlp, &x0, &cfg.sqp)?;
            let (w, q) = report.x.split_at(m);
            let trace = provider
                .jacobian(q)
                .and_then(|j| Ok(InformationEval::new(&j, w, None)?.trace()))
                .unwrap_or(f64::NAN);
            Ok(Run {
                trial: r,
                variant,
                iterations: report.iterations,
                qp_iterations: report.qp_iterations,
                status: report.status,
                trace,
                x: report.x,
            })
        })
        .collect::<Result<_>>()?;

    let mut records: Vec<TrialRecord> = runs
        .iter()
        .map(|run| TrialRecord {
            experiment: ExperimentId::Exp3,
            trial: run.trial,
            alpha: None,
            size: Some(cfg.num_times),
            variant: run.variant,
            iterations: run.iterations,
            qp_iterations: run.qp_iterations,
            status: run.status,
            objective: run.trace,
            distance: None,
            speedup: None,
            content_hash: ContentHash::new("exp3")
                .floats(&[cfg.num_times as f64, FHN_BUDGET as f64])
                .floats(&starts[run.trial])
                .finish(),
        })
        .collect();

    let mut ratios = Vec::new();
    let (mut kps, mut kus) = (Vec::new(), Vec::new());
    let mut score = 0;
    for group in records.chunks_mut(cfg.precondition.variants().len()) {
        let ku = group
            .iter()
            .find(|r| r.variant == Variant::Unpreconditioned)
            .map(|r| r.iterations);
        let kp = group
            .iter()
            .find(|r| r.variant == Variant::Preconditioned)
            .map(|r| r.iterations);
        if let (Some(ku), Some(kp)) = (ku, kp) {
            let ratio = ku as f64 / kp.max(1) as f64;
            group.iter_mut().for_each(|r| r.speedup = Some(ratio));
            ratios.push(ratio);
            kus.push(ku as f64);
            kps.push(kp as f64);
            if kp < ku {
                score += 1;
            }
        }
    }
    let table = (!ratios.is_empty()).then(|| Table1 {
        score,
        repeats: ratios.len(),
        mean_kp: mean(&kps),
        mean_ku: mean(&kus),
        mean_ratio: mean(&ratios),
        sigma: sample_std(&ratios),
    });

    let design = best_run(&runs)
        .map(|run| export(&model, run, m, &tol))
        .transpose()?;
    Ok(Exp3Outcome {
        records,
        table,
        design,
    })
}

/// Lowest `Tr(M⁻¹)` among preconditioned runs, converged ones first; falls
/// back to unpreconditioned runs when no preconditioned run exists.
fn best_run(runs: &[Run]) -> Option<&Run> {
    let pick = |variant: Variant| {
        runs.iter()
            .filter(|r| r.variant == variant && r.trace.is_finite())
            .min_by(|a, b| {
                let ka = (a.status != SqpStatus::Converged, a.trace);
                let kb = (b.status != SqpStatus::Converged, b.trace);
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
    };
    pick(Variant::Preconditioned).or_else(|| pick(Variant::Unpreconditioned))
}

fn export(model: &FhnModel, run: &Run, m: usize, tol: &Tolerances) -> Result<DesignExport> {
    let (w, q) = run.x.split_at(m);
    let controls: [f64; NUM_CONTROLS] = [q[0], q[1], q[2]];
    let measurements = w
        .iter()
        .enumerate()
        .filter(|(_, &wi)| wi > SELECTED_WEIGHT)
        .map(|(i, &wi)| (model.times()[i / 2], i % 2 + 1, wi))
        .collect();
    let horizon = model.times().last().copied().unwrap_or(0.0);
    let steps = (horizon / TRAJECTORY_SPACING).round() as usize;
    let fine: Vec<f64> = (1..=steps).map(|k| TRAJECTORY_SPACING * k as f64).collect();
    let trajectory =
        integrate_with_sensitivities(&model.with_controls(controls).with_times(fine)?, tol)?;
    Ok(DesignExport {
        trial: run.trial,
        variant: run.variant,
        status: run.status,
        controls,
        objective: run.trace,
        measurements,
        trajectory,
    })
}
