//! Quasi-Newton SQP for bound-constrained problems with one linear equality.
//!
//! Each iteration solves the QP
//!
//! ```text
//! minimize   ½ dᵀB d + ∇f(x)ᵀd
//! subject to aᵀ(x + d) = b,  low ≤ x + d ≤ high
//! ```
//!
//! with [`crate::qp::solve_qp`], backtracks on the augmented Lagrangian
//! `Φ(x; λ, ρ) = f + λc + ρ/2·c²` (`c = aᵀx − b`), and updates `B` with
//! Powell-damped BFGS. The run stops when `‖d‖₂ ≤ tol_d`.

use crate::dense::{cholesky, dot, norm2, DenseMatrix};
use crate::error::{Error, Result};
use crate::qp::{
    default_iteration_limit, project_feasible, solve_qp, BoundSide, QpProblem, QpStatus,
};

pub use crate::qp::LinearEquality;

/// A smooth objective over a box with an optional linear equality.
pub trait Nlp {
    fn dim(&self) -> usize;

    fn lower_bounds(&self) -> &[f64];

    fn upper_bounds(&self) -> &[f64];

    fn equality(&self) -> Option<LinearEquality>;

    fn objective(&mut self, x: &[f64]) -> Result<f64>;

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    /// Diagonal of the exact (or approximated) Hessian, used to seed `B`.
    fn initial_hessian_diagonal(&mut self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct SqpOptions {
    /// Convergence threshold on the search-direction length.
    pub tol_d: f64,
    pub max_iterations: usize,
    /// QP iteration limit; `None` uses [`default_iteration_limit`].
    pub qp_max_iterations: Option<usize>,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    pub min_step: f64,
    /// Floor on the initial Hessian diagonal, relative to its largest entry.
    pub hessian_floor: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            tol_d: 1e-8,
            max_iterations: 500,
            qp_max_iterations: None,
            armijo: 1e-4,
            min_step: 1e-12,
            hessian_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SqpStatus {
    Converged,
    MaxIterations,
    QpIterationLimit,
    EvaluationFailure,
}

impl SqpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SqpStatus::Converged => "Converged",
            SqpStatus::MaxIterations => "MaxIterations",
            SqpStatus::QpIterationLimit => "QpIterationLimit",
            SqpStatus::EvaluationFailure => "EvaluationFailure",
        }
    }
}

impl std::str::FromStr for SqpStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(SqpStatus::Converged),
            "MaxIterations" => Ok(SqpStatus::MaxIterations),
            "QpIterationLimit" => Ok(SqpStatus::QpIterationLimit),
            "EvaluationFailure" => Ok(SqpStatus::EvaluationFailure),
            other => Err(Error::InvalidInput(format!("unknown status {other}"))),
        }
    }
}

/// One SQP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// `‖d‖₂` of the QP step.
    pub direction_norm: f64,
    /// Merit value after the iteration.
    pub merit: f64,
    /// Accepted step length; zero when no step was taken.
    pub step_length: f64,
    /// Objective after the iteration.
    pub objective: f64,
    pub qp_iterations: usize,
    /// Merit before the step and the predicted (directional) decrease.
    pub merit_before: f64,
    pub predicted_decrease: f64,
    /// Accepted through the derivative-based test in the roundoff regime.
    pub approximate_armijo: bool,
}

#[derive(Debug, Clone)]
pub struct SqpReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: SqpStatus,
    pub trace: Vec<IterationRecord>,
    pub eq_multiplier: f64,
    /// Scaled KKT residual `‖∇f + aλ − z‖∞ / (1 + ‖∇f‖∞)` at the last QP.
    pub kkt_residual: f64,
    pub qp_iterations: usize,
}

impl SqpReport {
    pub fn final_direction_norm(&self) -> Option<f64> {
        self.trace.last().map(|r| r.direction_norm)
    }
}

/// Powell-damped BFGS update; the result stays symmetric positive definite.
pub fn damped_bfgs_update(b: &DenseMatrix, s: &[f64], y: &[f64]) -> Result<DenseMatrix> {
    let n = b.rows();
    if s.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch("BFGS vectors".into()));
    }
    let bs = b.matvec(s);
    let sbs = dot(s, &bs);
    if !(sbs > 0.0) || !sbs.is_finite() {
        return Err(Error::DegenerateStep(sbs));
    }
    let sy = dot(s, y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r: Vec<f64> = y
        .iter()
        .zip(&bs)
        .map(|(yi, bsi)| theta * yi + (1.0 - theta) * bsi)
        .collect();
    let sr = dot(s, &r);
    if !(sr > 0.0) || !sr.is_finite() {
        return Err(Error::DegenerateStep(sbs));
    }
    let mut out = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = b[(i, j)] - bs[i] * bs[j] / sbs + r[i] * r[j] / sr;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    if !out.all_finite() {
        return Err(Error::DegenerateStep(sbs));
    }
    Ok(out)
}

/// `diag(max(|hᵢ|, floor · maxⱼ|hⱼ|))` from the problem's Hessian diagonal
/// at `x0`. An all-zero diagonal becomes `floor · I`.
pub fn initial_hessian(nlp: &mut dyn Nlp, x0: &[f64], floor: f64) -> Result<DenseMatrix> {
    let diag = nlp.initial_hessian_diagonal(x0)?;
    if diag.len() != nlp.dim() {
        return Err(Error::DimensionMismatch("initial Hessian diagonal".into()));
    }
    let largest = diag
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let threshold = if largest > 0.0 {
        floor * largest
    } else {
        floor
    };
    let d: Vec<f64> = diag
        .iter()
        .map(|v| {
            if v.is_finite() {
                v.abs().max(threshold)
            } else {
                threshold
            }
        })
        .collect();
    Ok(DenseMatrix::from_diagonal(&d))
}

struct Merit<'a> {
    eq: Option<&'a LinearEquality>,
    lambda: f64,
    rho: f64,
}

impl Merit<'_> {
    /// Constraint residual, with values at the rounding level of `aᵀx`
    /// treated as exact feasibility.
    fn residual(e: &LinearEquality, x: &[f64]) -> f64 {
        let c = e.residual(x);
        let scale: f64 = e
            .coeffs
            .iter()
            .zip(x)
            .map(|(a, xi)| (a * xi).abs())
            .sum::<f64>()
            + e.rhs.abs();
        if c.abs() <= 8.0 * f64::EPSILON * x.len() as f64 * scale {
            0.0
        } else {
            c
        }
    }

    fn value(&self, f: f64, x: &[f64]) -> f64 {
        match self.eq {
            Some(e) => {
                let c = Self::residual(e, x);
                f + self.lambda * c + 0.5 * self.rho * c * c
            }
            None => f,
        }
    }

    /// Directional derivative of Φ at `x` along `d`.
    fn slope(&self, grad: &[f64], x: &[f64], d: &[f64]) -> f64 {
        let mut s = dot(grad, d);
        if let Some(e) = self.eq {
            let c = Self::residual(e, x);
            s += (self.lambda + self.rho * c) * dot(&e.coeffs, d);
        }
        s
    }
}

struct Accepted {
    step: f64,
    x: Vec<f64>,
    f: f64,
    grad: Option<Vec<f64>>,
    approximate: bool,
}

/// Relative band in which merit differences are considered roundoff.
const ROUNDOFF_BAND: f64 = 1e-10;

/// Backtracking line search on the augmented Lagrangian merit function.
///
/// Tries `α = 1, ½, ¼, …` down to `min_step`. A trial point whose objective
/// cannot be evaluated (for example a singular information matrix) is
/// rejected. When the merit change is lost in roundoff, sufficient decrease
/// is checked through the trapezoidal estimate `α(Φ′(0) + Φ′(α))/2` instead.
#[allow(clippy::too_many_arguments)]
fn merit_line_search(
    nlp: &mut dyn Nlp,
    merit: &Merit<'_>,
    x: &[f64],
    f: f64,
    slope: f64,
    d: &[f64],
    at_bound: &[Option<BoundSide>],
    options: &SqpOptions,
) -> Result<Accepted> {
    let lower = nlp.lower_bounds().to_vec();
    let upper = nlp.upper_bounds().to_vec();
    let phi0 = merit.value(f, x);
    let mut alpha = 1.0;
    while alpha >= options.min_step {
        let trial: Vec<f64> = (0..x.len())
            .map(|i| {
                if alpha == 1.0 {
                    match at_bound[i] {
                        Some(BoundSide::Lower) => return lower[i],
                        Some(BoundSide::Upper) => return upper[i],
                        None => {}
                    }
                }
                (x[i] + alpha * d[i]).clamp(lower[i], upper[i])
            })
            .collect();
        let Ok(ft) = nlp.objective(&trial) else {
            alpha *= 0.5;
            continue;
        };
        if !ft.is_finite() {
            alpha *= 0.5;
            continue;
        }
        let phit = merit.value(ft, &trial);
        if phit <= phi0 + options.armijo * alpha * slope {
            return Ok(Accepted {
                step: alpha,
                x: trial,
                f: ft,
                grad: None,
                approximate: false,
            });
        }
        if phit <= phi0 + ROUNDOFF_BAND * phi0.abs() {
            if let Ok(gt) = nlp.gradient(&trial) {
                let slope_t = merit.slope(&gt, &trial, d);
                if slope_t <= (1.0 - 2.0 * options.armijo) * slope.abs() {
                    return Ok(Accepted {
                        step: alpha,
                        x: trial,
                        f: ft,
                        grad: Some(gt),
                        approximate: true,
                    });
                }
            }
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearchFailure)
}

/// Runs the SQP method from `x0` (projected onto the feasible set first).
///
/// A failed line search restarts the quasi-Newton matrix from the initial
/// diagonal. If the search fails again right after such a restart the
/// iteration has reached a fixed point and the run is reported as
/// [`SqpStatus::MaxIterations`] with the full iteration budget.
///
/// Only structural problems (dimension mismatch, empty feasible set) are
/// returned as errors; solver outcomes are reported through [`SqpStatus`].
pub fn solve(nlp: &mut dyn Nlp, x0: &[f64], options: &SqpOptions) -> Result<SqpReport> {
    let n = nlp.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "start of length {}",
            x0.len()
        )));
    }
    let lower = nlp.lower_bounds().to_vec();
    let upper = nlp.upper_bounds().to_vec();
    let eq = nlp.equality();
    let mut x = project_feasible(eq.as_ref(), &lower, &upper, x0)?;

    let mut report = SqpReport {
        x: x.clone(),
        objective: f64::NAN,
        iterations: 0,
        status: SqpStatus::EvaluationFailure,
        trace: Vec::new(),
        eq_multiplier: 0.0,
        kkt_residual: f64::INFINITY,
        qp_iterations: 0,
    };

    let start = nlp.objective(&x).and_then(|f| {
        Ok((
            f,
            nlp.gradient(&x)?,
            initial_hessian(nlp, &x, options.hessian_floor)?,
        ))
    });
    let (mut f, mut grad, mut b) = match start {
        Ok(v) => v,
        Err(_) => return Ok(report),
    };
    report.objective = f;

    let mut merit = Merit {
        eq: eq.as_ref(),
        lambda: 0.0,
        rho: 1.0,
    };
    let qp_limit = options
        .qp_max_iterations
        .unwrap_or_else(|| default_iteration_limit(&lower, &upper));

    let mut fresh_hessian = true;
    let mut stalled = false;
    for k in 0..options.max_iterations {
        let qp_lower: Vec<f64> = (0..n).map(|i| lower[i] - x[i]).collect();
        let qp_upper: Vec<f64> = (0..n).map(|i| upper[i] - x[i]).collect();
        let qp_eq = eq.as_ref().map(|e| LinearEquality {
            coeffs: e.coeffs.clone(),
            rhs: -e.residual(&x),
        });
        let d0 = project_feasible(qp_eq.as_ref(), &qp_lower, &qp_upper, &vec![0.0; n])?;
        let mut qp = QpProblem {
            hessian: b.clone(),
            linear: grad.clone(),
            equality: qp_eq,
            lower: qp_lower,
            upper: qp_upper,
            max_iterations: qp_limit,
        };

        let sol = match solve_qp(&qp, &d0) {
            Ok(s) => s,
            Err(Error::NotPositiveDefinite { .. }) => {
                // The quasi-Newton matrix lost definiteness numerically; restart it.
                let Ok(fresh) = initial_hessian(nlp, &x, options.hessian_floor) else {
                    report.status = SqpStatus::EvaluationFailure;
                    break;
                };
                b = fresh;
                fresh_hessian = true;
                qp.hessian = b.clone();
                match solve_qp(&qp, &d0) {
                    Ok(s) => s,
                    Err(_) => {
                        report.status = SqpStatus::EvaluationFailure;
                        break;
                    }
                }
            }
            Err(e) => return Err(e),
        };
        report.qp_iterations += sol.iterations;
        let d = sol.x.clone();
        let dn = norm2(&d);
        merit.lambda = sol.eq_multiplier;
        report.eq_multiplier = sol.eq_multiplier;
        report.kkt_residual = kkt_residual(&qp, &sol.bound_multipliers, sol.eq_multiplier);

        if sol.status == QpStatus::IterationLimit {
            report
                .trace
                .push(record(dn, merit.value(f, &x), 0.0, f, sol.iterations, 0.0));
            report.status = SqpStatus::QpIterationLimit;
            break;
        }
        if dn <= options.tol_d {
            report
                .trace
                .push(record(dn, merit.value(f, &x), 0.0, f, sol.iterations, 0.0));
            report.status = SqpStatus::Converged;
            break;
        }

        let mut slope = merit.slope(&grad, &x, &d);
        if slope >= 0.0 {
            merit.rho = merit.rho.max(2.0 * merit.lambda.abs() + 1.0);
            slope = merit.slope(&grad, &x, &d);
        }
        let phi_before = merit.value(f, &x);

        let mut at_bound = vec![None; n];
        for ab in &sol.active_set {
            at_bound[ab.index] = Some(ab.side);
        }
        let accepted = if slope < 0.0 {
            merit_line_search(nlp, &merit, &x, f, slope, &d, &at_bound, options)
        } else {
            Err(Error::LineSearchFailure)
        };
        let accepted = match accepted {
            Ok(a) => a,
            Err(_) => {
                report
                    .trace
                    .push(record(dn, phi_before, 0.0, f, sol.iterations, slope));
                if k == 0 {
                    report.status = SqpStatus::EvaluationFailure;
                    break;
                }
                if fresh_hessian {
                    // Restarting from the same point and matrix would repeat
                    // this iteration forever, so the budget is spent.
                    report.status = SqpStatus::MaxIterations;
                    stalled = true;
                    break;
                }
                match initial_hessian(nlp, &x, options.hessian_floor) {
                    Ok(fresh) => b = fresh,
                    Err(_) => {
                        report.status = SqpStatus::EvaluationFailure;
                        break;
                    }
                }
                fresh_hessian = true;
                report.status = SqpStatus::MaxIterations;
                continue;
            }
        };

        let grad_new = match accepted.grad {
            Some(g) => g,
            None => match nlp.gradient(&accepted.x) {
                Ok(g) => g,
                Err(_) => {
                    report.status = SqpStatus::EvaluationFailure;
                    break;
                }
            },
        };
        let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        // The constraint is linear, so the Lagrangian gradient difference is the
        // objective gradient difference.
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        fresh_hessian = false;
        b = match damped_bfgs_update(&b, &s, &y) {
            Ok(next) => next,
            Err(_) => match initial_hessian(nlp, &accepted.x, options.hessian_floor) {
                Ok(fresh) => {
                    fresh_hessian = true;
                    fresh
                }
                Err(_) => {
                    report.status = SqpStatus::EvaluationFailure;
                    break;
                }
            },
        };

        x = accepted.x;
        f = accepted.f;
        grad = grad_new;
        let mut rec = record(
            dn,
            merit.value(f, &x),
            accepted.step,
            f,
            sol.iterations,
            slope,
        );
        rec.merit_before = phi_before;
        rec.approximate_armijo = accepted.approximate;
        report.trace.push(rec);
        report.status = SqpStatus::MaxIterations;
    }

    report.iterations = if stalled {
        options.max_iterations
    } else {
        report.trace.len()
    };
    report.x = x;
    report.objective = f;
    Ok(report)
}

fn record(
    dn: f64,
    merit: f64,
    step: f64,
    f: f64,
    qp_iterations: usize,
    slope: f64,
) -> IterationRecord {
    IterationRecord {
        direction_norm: dn,
        merit,
        step_length: step,
        objective: f,
        qp_iterations,
        merit_before: merit,
        predicted_decrease: slope,
        approximate_armijo: false,
    }
}

/// NLP stationarity residual `‖∇f + aλ − z‖∞ / (1 + ‖∇f‖∞)` from the QP
/// multipliers; at the QP solution it equals `‖B d‖∞` up to scaling.
fn kkt_residual(qp: &QpProblem, z: &[f64], lambda: f64) -> f64 {
    let scale = 1.0 + crate::dense::norm_inf(&qp.linear);
    let worst = (0..qp.linear.len())
        .map(|i| {
            let a = qp.equality.as_ref().map_or(0.0, |e| e.coeffs[i]);
            (qp.linear[i] + a * lambda - z[i]).abs()
        })
        .fold(0.0_f64, f64::max);
    worst / scale
}

/// Checks that a matrix is numerically SPD via Cholesky.
pub fn is_positive_definite(b: &DenseMatrix) -> bool {
    cholesky(b).is_ok()
}
