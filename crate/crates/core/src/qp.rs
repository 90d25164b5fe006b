//! Primal active-set solver for strictly convex quadratic programs
//!
//! ```text
//! minimize   ½ xᵀH x + gᵀx
//! subject to aᵀx = b          (optional)
//!            low ≤ x ≤ high    (entries may be infinite)
//! ```
//!
//! The working set holds bounds treated as equalities. Each iteration solves
//! the equality-constrained subproblem on the free variables through the
//! Schur complement of the single equality row, then either steps to the
//! first blocking bound or releases the bound with the most negative
//! multiplier. Ties go to the smallest index, so the method is deterministic.

use crate::dense::{dot, factor_lower, norm_inf, DenseMatrix};
use crate::error::{Error, Result};

/// Linear equality `coeffsᵀ x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearEquality {
    pub fn residual(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) - self.rhs
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DenseMatrix,
    pub linear: Vec<f64>,
    pub equality: Option<LinearEquality>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_iterations: usize,
}

impl QpProblem {
    /// Problem with the default iteration limit `10·n·(1 + number of finite bounds)`.
    pub fn new(
        hessian: DenseMatrix,
        linear: Vec<f64>,
        equality: Option<LinearEquality>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        let max_iterations = default_iteration_limit(&lower, &upper);
        Self {
            hessian,
            linear,
            equality,
            lower,
            upper,
            max_iterations,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.hessian.matvec(x)) + dot(&self.linear, x)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.hessian.rows() != n
            || self.hessian.cols() != n
            || self.lower.len() != n
            || self.upper.len() != n
            || self.equality.as_ref().is_some_and(|e| e.coeffs.len() != n)
        {
            return Err(Error::DimensionMismatch(format!("QP of dimension {n}")));
        }
        if self.hessian.asymmetry() > crate::dense::SYMMETRY_TOLERANCE {
            return Err(Error::InvalidInput("QP Hessian is not symmetric".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(self.lower[i] <= self.upper[i])) {
            return Err(Error::InvalidInput(format!("bound {i} has low > high")));
        }
        Ok(())
    }
}

/// `10·n·(1 + number of finite bounds)`.
pub fn default_iteration_limit(lower: &[f64], upper: &[f64]) -> usize {
    let finite = lower.iter().chain(upper).filter(|v| v.is_finite()).count();
    10 * lower.len() * (1 + finite)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveBound {
    pub index: usize,
    pub side: BoundSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    IterationLimit,
}

/// Minimizer with multipliers in the convention
/// `H x + g + a·λ = z`, `z ≥ 0` at active lower bounds and `z ≤ 0` at active upper bounds.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub eq_multiplier: f64,
    pub bound_multipliers: Vec<f64>,
    pub active_set: Vec<ActiveBound>,
    pub iterations: usize,
    pub status: QpStatus,
}

impl QpSolution {
    /// Max of stationarity, primal infeasibility and complementarity violations.
    pub fn kkt_residual(&self, p: &QpProblem) -> f64 {
        let x = &self.x;
        let hx = p.hessian.matvec(x);
        let a = p.equality.as_ref();
        let mut worst = 0.0_f64;
        for i in 0..x.len() {
            let ai = a.map_or(0.0, |e| e.coeffs[i]);
            let stat = hx[i] + p.linear[i] + ai * self.eq_multiplier - self.bound_multipliers[i];
            worst = worst.max(stat.abs());
            worst = worst.max((p.lower[i] - x[i]).max(0.0));
            worst = worst.max((x[i] - p.upper[i]).max(0.0));
            let z = self.bound_multipliers[i];
            if z > 0.0 {
                worst = worst.max(z * (x[i] - p.lower[i]).abs().min(1.0));
            } else if z < 0.0 {
                worst = worst.max(-z * (p.upper[i] - x[i]).abs().min(1.0));
            }
        }
        if let Some(e) = a {
            worst = worst.max(e.residual(x).abs());
        }
        worst
    }
}

/// Equality tolerance on the starting point.
const START_TOLERANCE: f64 = 1e-10;

/// Solves the QP from a feasible starting point.
///
/// Every bound that `x0` satisfies with equality starts in the working set.
/// Running out of iterations, or more than `n` consecutive zero-length
/// steps, yields [`QpStatus::IterationLimit`].
pub fn solve_qp(p: &QpProblem, x0: &[f64]) -> Result<QpSolution> {
    p.validate()?;
    let n = p.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "start of length {}",
            x0.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(x0[i] >= p.lower[i] && x0[i] <= p.upper[i])) {
        return Err(Error::InfeasibleStart(format!(
            "x0[{i}] = {} outside [{}, {}]",
            x0[i], p.lower[i], p.upper[i]
        )));
    }
    if let Some(e) = &p.equality {
        let r = e.residual(x0);
        let scale = 1.0 + e.rhs.abs();
        if r.abs() > START_TOLERANCE * scale {
            return Err(Error::InfeasibleStart(format!("equality residual {r:e}")));
        }
    }

    let mut solver = ActiveSet::new(p, x0.to_vec());
    solver.run()
}

struct ActiveSet<'a> {
    p: &'a QpProblem,
    x: Vec<f64>,
    working: Vec<Option<BoundSide>>,
    pinned: Vec<bool>,
    coeffs: Vec<f64>,
    has_equality: bool,
}

/// Result of the equality-constrained subproblem on the free variables.
struct Subproblem {
    step: Vec<f64>,
    multiplier: Option<f64>,
}

impl<'a> ActiveSet<'a> {
    fn new(p: &'a QpProblem, x: Vec<f64>) -> Self {
        let n = p.dim();
        let pinned: Vec<bool> = (0..n).map(|i| p.lower[i] == p.upper[i]).collect();
        let working = (0..n)
            .map(|i| {
                if x[i] == p.lower[i] {
                    Some(BoundSide::Lower)
                } else if x[i] == p.upper[i] {
                    Some(BoundSide::Upper)
                } else {
                    None
                }
            })
            .collect();
        let (coeffs, has_equality) = match &p.equality {
            Some(e) => (e.coeffs.clone(), true),
            None => (vec![0.0; n], false),
        };
        Self {
            p,
            x,
            working,
            pinned,
            coeffs,
            has_equality,
        }
    }

    fn gradient(&self) -> Vec<f64> {
        let mut g = self.p.hessian.matvec(&self.x);
        g.iter_mut().zip(&self.p.linear).for_each(|(v, l)| *v += l);
        g
    }

    fn run(&mut self) -> Result<QpSolution> {
        let n = self.p.dim();
        let mut degenerate_run = 0usize;
        let mut iterations = 0usize;
        let mut last_multiplier = 0.0;

        // Bounds whose release produced no feasible motion since the last
        // nonzero step; their multipliers are treated as roundoff.
        let mut blocked = vec![false; n];
        let mut released: Option<usize> = None;
        // A full unblocked step lands on the subspace minimizer; recomputing
        // the step there only reproduces roundoff in the gradient.
        let mut at_subspace_min = false;

        while iterations < self.p.max_iterations {
            let grad = self.gradient();
            let sub = self.solve_subproblem(&grad)?;
            let step_tol = 1e-13 * (1.0 + norm_inf(&self.x));

            if let Some(i) = released.take() {
                if !self.moves_off_bound(i, &sub.step, step_tol) {
                    self.working[i] = Some(self.side_at(i));
                    blocked[i] = true;
                    continue;
                }
            }

            if at_subspace_min || norm_inf(&sub.step) <= step_tol {
                at_subspace_min = false;
                let lambda = match sub.multiplier {
                    Some(l) => l,
                    None => self.fixed_multiplier(&grad),
                };
                last_multiplier = lambda;
                let z = self.bound_multipliers(&grad, lambda);
                match self.most_violated(&z, &grad, lambda, &blocked) {
                    None => {
                        return Ok(self.solution(lambda, z, iterations, QpStatus::Optimal));
                    }
                    Some(i) => {
                        self.working[i] = None;
                        released = Some(i);
                        iterations += 1;
                        continue;
                    }
                }
            }

            let (alpha, blocking) = self.ratio_test(&sub.step);
            for (xi, pi) in self.x.iter_mut().zip(&sub.step) {
                *xi += alpha * pi;
            }
            if let Some((i, side)) = blocking {
                self.x[i] = match side {
                    BoundSide::Lower => self.p.lower[i],
                    BoundSide::Upper => self.p.upper[i],
                };
                self.working[i] = Some(side);
            }
            for i in 0..n {
                self.x[i] = self.x[i].clamp(self.p.lower[i], self.p.upper[i]);
            }
            iterations += 1;
            at_subspace_min = blocking.is_none();
            if alpha * norm_inf(&sub.step) <= step_tol {
                degenerate_run += 1;
                if degenerate_run > n {
                    break;
                }
            } else {
                degenerate_run = 0;
                blocked.iter_mut().for_each(|b| *b = false);
            }
        }

        let grad = self.gradient();
        let z = self.bound_multipliers(&grad, last_multiplier);
        Ok(self.solution(last_multiplier, z, iterations, QpStatus::IterationLimit))
    }

    /// Bound side that `x[i]` currently sits on (lower if both coincide).
    fn side_at(&self, i: usize) -> BoundSide {
        if self.x[i] == self.p.upper[i] && self.x[i] != self.p.lower[i] {
            BoundSide::Upper
        } else {
            BoundSide::Lower
        }
    }

    /// Whether `step` does not push variable `i` back through the bound it
    /// was just released from.
    fn moves_off_bound(&self, i: usize, step: &[f64], tol: f64) -> bool {
        match self.side_at(i) {
            BoundSide::Lower => step[i] >= -tol,
            BoundSide::Upper => step[i] <= tol,
        }
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.p.dim())
            .filter(|&i| self.working[i].is_none())
            .collect()
    }

    fn solve_subproblem(&self, grad: &[f64]) -> Result<Subproblem> {
        let n = self.p.dim();
        let free = self.free_indices();
        let mut step = vec![0.0; n];
        if free.is_empty() {
            return Ok(Subproblem {
                step,
                multiplier: None,
            });
        }
        let k = free.len();
        let mut h = DenseMatrix::zeros(k, k);
        for (cj, &j) in free.iter().enumerate() {
            for (ci, &i) in free.iter().enumerate().skip(cj) {
                h[(ci, cj)] = self.p.hessian[(i, j)];
            }
        }
        let factor = factor_lower(&h)?;
        let grad_f: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
        let a_f: Vec<f64> = free.iter().map(|&i| self.coeffs[i]).collect();
        let u = factor.solve(&grad_f);

        let supported = self.has_equality && a_f.iter().any(|&v| v != 0.0);
        let (p_f, multiplier) = if supported {
            let v = factor.solve(&a_f);
            let lambda = -dot(&a_f, &u) / dot(&a_f, &v);
            let p_f: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| -ui - lambda * vi).collect();
            (p_f, Some(lambda))
        } else {
            (u.iter().map(|v| -v).collect(), None)
        };
        for (c, &i) in free.iter().enumerate() {
            step[i] = p_f[c];
        }
        Ok(Subproblem { step, multiplier })
    }

    /// Equality multiplier when no free variable carries the equality row:
    /// the centre of the interval of λ that makes every working multiplier
    /// sign-correct (or the point of least maximal violation if it is empty).
    fn fixed_multiplier(&self, grad: &[f64]) -> f64 {
        if !self.has_equality {
            return 0.0;
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (i, side) in self.working.iter().enumerate() {
            let (Some(side), false) = (side, self.pinned[i]) else {
                continue;
            };
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            let threshold = -grad[i] / a;
            // Lower needs grad + aλ ≥ 0, upper needs grad + aλ ≤ 0.
            let needs_above = matches!(side, BoundSide::Lower) == (a > 0.0);
            if needs_above {
                lo = lo.max(threshold);
            } else {
                hi = hi.min(threshold);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    }

    fn bound_multipliers(&self, grad: &[f64], lambda: f64) -> Vec<f64> {
        (0..self.p.dim())
            .map(|i| {
                if self.working[i].is_some() {
                    grad[i] + self.coeffs[i] * lambda
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Working bound whose multiplier has the wrong sign by the largest margin.
    fn most_violated(
        &self,
        z: &[f64],
        grad: &[f64],
        lambda: f64,
        blocked: &[bool],
    ) -> Option<usize> {
        let scale = norm_inf(grad).max(lambda.abs() * norm_inf(&self.coeffs));
        let tol = 1e-11 * scale;
        let mut best: Option<(usize, f64)> = None;
        for (i, side) in self.working.iter().enumerate() {
            if self.pinned[i] || blocked[i] {
                continue;
            }
            let violation = match side {
                Some(BoundSide::Lower) => -z[i],
                Some(BoundSide::Upper) => z[i],
                None => continue,
            };
            if violation > tol && best.is_none_or(|(_, v)| violation > v) {
                best = Some((i, violation));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Longest step in `[0, 1]` along `step` and the first bound it hits.
    fn ratio_test(&self, step: &[f64]) -> (f64, Option<(usize, BoundSide)>) {
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..self.p.dim() {
            if self.working[i].is_some() {
                continue;
            }
            let pi = step[i];
            let (limit, side) = if pi < 0.0 && self.p.lower[i].is_finite() {
                ((self.p.lower[i] - self.x[i]) / pi, BoundSide::Lower)
            } else if pi > 0.0 && self.p.upper[i].is_finite() {
                ((self.p.upper[i] - self.x[i]) / pi, BoundSide::Upper)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            if limit < alpha {
                alpha = limit;
                blocking = Some((i, side));
            }
        }
        (alpha, blocking)
    }

    fn solution(
        &self,
        lambda: f64,
        z: Vec<f64>,
        iterations: usize,
        status: QpStatus,
    ) -> QpSolution {
        let active_set = self
            .working
            .iter()
            .enumerate()
            .filter_map(|(index, s)| s.map(|side| ActiveBound { index, side }))
            .collect();
        QpSolution {
            x: self.x.clone(),
            eq_multiplier: if self.has_equality { lambda } else { 0.0 },
            bound_multipliers: z,
            active_set,
            iterations,
            status,
        }
    }
}

/// Euclidean projection onto `{low ≤ x ≤ high} ∩ {aᵀx = b}`.
///
/// The projection has the form `clip(x + t·a)`; `t` is found exactly on the
/// piecewise-linear, nondecreasing map `t ↦ aᵀclip(x + t·a)`. A final pass
/// spreads the remaining roundoff residual over non-saturated coordinates.
pub fn project_feasible(
    eq: Option<&LinearEquality>,
    lower: &[f64],
    upper: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = x.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch("projection bounds".into()));
    }
    let clip = |v: f64, i: usize| v.max(lower[i]).min(upper[i]);
    let Some(eq) = eq else {
        return Ok((0..n).map(|i| clip(x[i], i)).collect());
    };
    let a = &eq.coeffs;
    if a.len() != n {
        return Err(Error::DimensionMismatch("projection equality".into()));
    }
    let (mut min_sum, mut max_sum) = (0.0, 0.0);
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        let (l, h) = (a[i] * lower[i], a[i] * upper[i]);
        min_sum += l.min(h);
        max_sum += l.max(h);
    }
    let slack = 1e-12 * (1.0 + eq.rhs.abs());
    if min_sum > eq.rhs + slack || max_sum < eq.rhs - slack {
        return Err(Error::EmptyFeasibleSet(format!(
            "attainable range [{min_sum}, {max_sum}] excludes {}",
            eq.rhs
        )));
    }

    let at = |t: f64| -> f64 { (0..n).map(|i| a[i] * clip(x[i] + t * a[i], i)).sum() };

    let mut breaks: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if a[i] != 0.0 {
            for b in [lower[i], upper[i]] {
                if b.is_finite() {
                    breaks.push((b - x[i]) / a[i]);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // Bracket the root between consecutive breakpoints, then solve the linear piece.
    let target = eq.rhs;
    let t = if breaks.is_empty() {
        let denom: f64 = a.iter().map(|v| v * v).sum();
        (target - at(0.0)) / denom
    } else {
        let idx = breaks.partition_point(|&t| at(t) < target);
        let (t0, t1) = match idx {
            0 => (breaks[0] - 1.0, breaks[0]),
            k if k == breaks.len() => (breaks[k - 1], breaks[k - 1] + 1.0),
            k => (breaks[k - 1], breaks[k]),
        };
        let mid = 0.5 * (t0 + t1);
        let slope: f64 = (0..n)
            .filter(|&i| {
                let v = x[i] + mid * a[i];
                v > lower[i] && v < upper[i]
            })
            .map(|i| a[i] * a[i])
            .sum();
        if slope > 0.0 {
            t0 + (target - at(t0)) / slope
        } else {
            t0
        }
    };
    let mut y: Vec<f64> = (0..n).map(|i| clip(x[i] + t * a[i], i)).collect();

    let r = target - dot(a, &y);
    if r != 0.0 {
        let inner: Vec<usize> = (0..n)
            .filter(|&i| a[i] != 0.0 && y[i] > lower[i] && y[i] < upper[i])
            .collect();
        let denom: f64 = inner.iter().map(|&i| a[i] * a[i]).sum();
        if denom > 0.0 {
            for &i in &inner {
                y[i] = clip(y[i] + r * a[i] / denom, i);
            }
        }
    }
    Ok(y)
}
