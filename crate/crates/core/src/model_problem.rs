//! The two-weight model problem
//!
//! ```text
//! minimize Tr([α⁻¹I + w₁v₁v₁ᵀ + w₂v₂v₂ᵀ]⁻¹)  subject to w₁ + w₂ = 1, 0 ≤ wᵢ ≤ 1
//! ```
//!
//! with orthonormal `v₁, v₂`. Eliminating `w₂ = 1 − w` and applying
//! Sherman-Morrison gives the scalar objective
//! `f(w) = 2α − wα²/(1+wα) − (1−w)α²/(1+(1−w)α)`, minimized at `w* = ½`.
//! The absolute condition number of that minimizer is
//! `κ = 1 / (|f″(w*)| |w*|) = (1 + α/2)³ / (2α³)`, which blows up like `α⁻³`;
//! for the preconditioned objective `−f⁻²` it is exactly 2 for every `α`.

use crate::criterion::{precondition, precondition_d1, precondition_d2, DesignProblem};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Minimizer of the model problem.
pub const MINIMIZER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelProblem {
    alpha: f64,
    preconditioned: bool,
}

impl ModelProblem {
    pub fn new(alpha: f64, preconditioned: bool) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha {alpha} must be positive"
            )));
        }
        Ok(Self {
            alpha,
            preconditioned,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn preconditioned(&self) -> bool {
        self.preconditioned
    }

    /// The same problem as a [`DesignProblem`] with `v₁ = e₁`, `v₂ = e₂`, budget 1.
    pub fn design_problem(&self) -> DesignProblem {
        DesignProblem::fixed(
            DenseMatrix::identity(2),
            1,
            Some(self.alpha),
            self.preconditioned,
        )
        .expect("model problem is a valid design problem")
    }
}

/// `f(w)` without preconditioning.
fn trace_value(alpha: f64, w: f64) -> f64 {
    let a2 = alpha * alpha;
    2.0 * alpha - w * a2 / (1.0 + w * alpha) - (1.0 - w) * a2 / (1.0 + (1.0 - w) * alpha)
}

/// `f′(w) = α³(2w − 1)(2 + α) / ((1 + wα)²(1 + (1−w)α)²)`, free of cancellation.
fn trace_d1(alpha: f64, w: f64) -> f64 {
    let a = 1.0 + w * alpha;
    let b = 1.0 + (1.0 - w) * alpha;
    alpha.powi(3) * (2.0 * w - 1.0) * (2.0 + alpha) / (a * a * b * b)
}

/// `f″(w) = 2α³/(1 + wα)³ + 2α³/(1 + (1−w)α)³`.
fn trace_d2(alpha: f64, w: f64) -> f64 {
    let a = 1.0 + w * alpha;
    let b = 1.0 + (1.0 - w) * alpha;
    let a3 = alpha.powi(3);
    2.0 * a3 / (a * a * a) + 2.0 * a3 / (b * b * b)
}

/// Reduced objective, preconditioned as `−f(w)⁻²` when requested.
pub fn reduced_objective(mp: &ModelProblem, w: f64) -> f64 {
    let f = trace_value(mp.alpha, w);
    if mp.preconditioned {
        precondition(f)
    } else {
        f
    }
}

/// First and second derivatives of the reduced objective.
pub fn reduced_derivatives(mp: &ModelProblem, w: f64) -> (f64, f64) {
    let (d1, d2) = (trace_d1(mp.alpha, w), trace_d2(mp.alpha, w));
    if !mp.preconditioned {
        return (d1, d2);
    }
    let f = trace_value(mp.alpha, w);
    (
        precondition_d1(f) * d1,
        precondition_d2(f) * d1 * d1 + precondition_d1(f) * d2,
    )
}

/// Closed-form absolute condition number of the minimizer.
pub fn analytic_condition_number(mp: &ModelProblem) -> f64 {
    if mp.preconditioned {
        2.0
    } else {
        let a = mp.alpha;
        (1.0 + 0.5 * a).powi(3) / (2.0 * a.powi(3))
    }
}

/// Perturbation giving a displacement of about 1e-8 in `w`: `1e-8 · |f″(w*)|`.
pub fn default_perturbation(mp: &ModelProblem) -> f64 {
    1e-8 * reduced_derivatives(mp, MINIMIZER).1.abs()
}

/// Central-difference estimate of `|g′(0)| / |g(0)|`, where `g` solves
/// `f′(g(ε)) = ε`.
pub fn empirical_condition_number(mp: &ModelProblem, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "perturbation {eps} must be positive"
        )));
    }
    let up = solve_perturbed_stationarity(mp, eps, MINIMIZER, 1.0)?;
    let down = solve_perturbed_stationarity(mp, -eps, 0.0, MINIMIZER)?;
    Ok((up - down).abs() / (2.0 * eps * MINIMIZER))
}

/// Root tolerance in `w`.
const ROOT_TOLERANCE: f64 = 1e-14;

/// Solves `f′(w) = target` on `[lo, hi]` by Newton's method from `w*`,
/// falling back to bisection whenever an iterate leaves the bracket.
fn solve_perturbed_stationarity(mp: &ModelProblem, target: f64, lo: f64, hi: f64) -> Result<f64> {
    let residual = |w: f64| reduced_derivatives(mp, w).0 - target;
    let (mut lo, mut hi) = (lo, hi);
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo.signum() == r_hi.signum() {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    let increasing = r_hi > 0.0;
    let mut w = MINIMIZER;
    for _ in 0..200 {
        let (d1, d2) = reduced_derivatives(mp, w);
        let r = d1 - target;
        if r == 0.0 {
            return Ok(w);
        }
        if (r > 0.0) == increasing {
            hi = w;
        } else {
            lo = w;
        }
        let newton = w - r / d2;
        let next = if d2 != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - w).abs() <= ROOT_TOLERANCE;
        w = next;
        if converged {
            return Ok(w);
        }
    }
    Ok(w)
}
