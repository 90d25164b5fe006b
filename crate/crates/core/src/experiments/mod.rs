//! Reproduction harness for the numerical experiments.
//!
//! - `exp1`: prior-information sweep over `α` on `50 × 7` row-normalized
//!   matrices, two starting guesses per instance.
//! - `exp2`: problem-size sweep over `50n × 7` matrices without prior.
//! - `exp3`: FitzHugh-Nagumo design with controls, paired runs per repeat.
//! - `model-sweep`: analytic and empirical condition numbers of the
//!   two-weight model problem.
//!
//! Trials run in parallel; each draws from its own RNG stream split from the
//! master seed, and records are returned in trial order, so output is
//! bit-identical for a given configuration.

mod fhn_design;
mod linear;
mod record;
mod stats;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use fhn_design::{run_exp3, DesignExport, Exp3Outcome, Table1};
pub use linear::{run_exp1, run_exp2, Exp1Outcome, Exp1Row, Exp2Outcome, Exp2Row};
pub use record::{format_float, read_records, write_records, TrialRecord, Variant, CSV_HEADER};
pub use stats::{mean, sample_std};
pub use sweep::{run_model_sweep, sweep_table, write_sweep, SweepRow, SWEEP_HEADER};

use crate::error::{Error, Result};
use crate::sqp::SqpOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    ModelSweep,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
            ExperimentId::ModelSweep => "model-sweep",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(ExperimentId::Exp1),
            "exp2" => Ok(ExperimentId::Exp2),
            "exp3" => Ok(ExperimentId::Exp3),
            "model-sweep" => Ok(ExperimentId::ModelSweep),
            other => Err(Error::InvalidInput(format!("unknown experiment {other:?}"))),
        }
    }
}

/// Which variants to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionMode {
    On,
    Off,
    Both,
}

impl PreconditionMode {
    pub fn variants(self) -> &'static [Variant] {
        match self {
            PreconditionMode::On => &[Variant::Preconditioned],
            PreconditionMode::Off => &[Variant::Unpreconditioned],
            PreconditionMode::Both => &[Variant::Unpreconditioned, Variant::Preconditioned],
        }
    }
}

impl FromStr for PreconditionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(PreconditionMode::On),
            "off" => Ok(PreconditionMode::Off),
            "both" => Ok(PreconditionMode::Both),
            other => Err(Error::Config(format!(
                "precondition must be on, off or both, not {other:?}"
            ))),
        }
    }
}

/// Parses `"a,b,c"` or `"log:lo:hi:count"` (log-spaced, both ends included).
pub fn parse_alphas(spec: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Config(format!("alpha grid {spec:?}: {why}"));
    let values = if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad("expected log:lo:hi:count"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("hi is not a number"))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| bad("count is not an integer"))?;
        if !(lo > 0.0 && hi >= lo) || count == 0 {
            return Err(bad("need 0 < lo <= hi and count >= 1"));
        }
        log_grid(lo, hi, count)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    Ok(values)
}

/// `count` log-spaced points from `lo` to `hi`, listed from `hi` down.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.log10(), lo.log10());
    (0..count)
        .map(|k| {
            if k == 0 {
                hi
            } else if k == count - 1 {
                lo
            } else {
                10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// Parses `"1,2,3"` into problem-size multipliers.
pub fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    let sizes = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("size {s:?} is not a positive integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() {
        return Err(Error::Config("empty size list".into()));
    }
    Ok(sizes)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Matrices per grid point (exp1, exp2) or repeats (exp3).
    pub trials: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub precondition: PreconditionMode,
    /// Measurement times for exp3.
    pub num_times: usize,
    pub sqp: SqpOptions,
}

/// Candidates in exp1.
pub const EXP1_CANDIDATES: usize = 50;
/// Parameters in exp1 and exp2.
pub const LINEAR_PARAMS: usize = 7;
/// Measurement budget in exp1 and exp2.
pub const LINEAR_BUDGET: usize = 20;
/// Condition number of the random matrices.
pub const MATRIX_CONDITION: f64 = 1e4;
/// Measurement budget in exp3.
pub const FHN_BUDGET: usize = 30;
/// Measurement times in exp3 at desk scale.
pub const DESK_TIMES: usize = 40;

impl ExperimentConfig {
    /// Desk-scale defaults.
    pub fn new(experiment: ExperimentId) -> Self {
        let (trials, alphas) = match experiment {
            ExperimentId::Exp1 => (20, log_grid(1e-6, 1.0, 5)),
            ExperimentId::Exp2 => (20, Vec::new()),
            ExperimentId::Exp3 => (5, Vec::new()),
            ExperimentId::ModelSweep => (1, log_grid(1e-4, 1.0, 9)),
        };
        Self {
            experiment,
            trials,
            seed: 1,
            alphas,
            sizes: vec![1, 2, 3, 4],
            precondition: PreconditionMode::Both,
            num_times: DESK_TIMES,
            sqp: SqpOptions::default(),
        }
    }

    /// The scale of the original study.
    pub fn paper_scale(experiment: ExperimentId) -> Self {
        let mut cfg = Self::new(experiment);
        match experiment {
            ExperimentId::Exp1 => {
                cfg.trials = 200;
                cfg.alphas = log_grid(1e-6, 1.0, 11);
            }
            ExperimentId::Exp2 => {
                cfg.trials = 200;
                cfg.sizes = (1..=10).collect();
            }
            ExperimentId::Exp3 => {
                cfg.num_times = crate::fhn::DEFAULT_TIMES;
            }
            ExperimentId::ModelSweep => {}
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let needs_alphas = matches!(
            self.experiment,
            ExperimentId::Exp1 | ExperimentId::ModelSweep
        );
        if needs_alphas {
            if self.alphas.is_empty() {
                return Err(Error::Config("alpha grid is empty".into()));
            }
            if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
                return Err(Error::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        if self.experiment == ExperimentId::Exp2
            && (self.sizes.is_empty() || self.sizes.contains(&0))
        {
            return Err(Error::Config(
                "sizes must be a non-empty list of n >= 1".into(),
            ));
        }
        if self.experiment == ExperimentId::Exp3 && 2 * self.num_times <= FHN_BUDGET {
            return Err(Error::Config(format!(
                "exp3 needs more than {} candidates, got {}",
                FHN_BUDGET,
                2 * self.num_times
            )));
        }
        if !(self.sqp.tol_d > 0.0) {
            return Err(Error::Config("tol-d must be positive".into()));
        }
        if self.sqp.max_iterations == 0 {
            return Err(Error::Config("sqp-max-iter must be at least 1".into()));
        }
        if self.sqp.qp_max_iterations == Some(0) {
            return Err(Error::Config("qp-max-iter must be at least 1".into()));
        }
        Ok(())
    }
}
