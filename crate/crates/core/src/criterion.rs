//! The A-criterion `Tr(M⁻¹)` of the relaxed design problem.
//!
//! The information matrix is `M(w, q) = [α⁻¹I +] J(q)ᵀ W(w) J(q)`, accumulated
//! as `Σᵢ wᵢ jᵢ jᵢᵀ` so that it is exactly symmetric. The preconditioned
//! objective replaces `f = Tr(M⁻¹)` by `h(f) = −f⁻²`, which has the same
//! minimizers because `h′ > 0` on `(0, ∞)`.
//!
//! Weight derivatives follow from `d Tr(M⁻¹) = −Tr(M⁻¹ dM M⁻¹)`:
//!
//! ```text
//! ∂f/∂wᵢ   = −‖M⁻¹ jᵢ‖²
//! ∂²f/∂wᵢ² = 2 (jᵢᵀ M⁻¹ jᵢ)(jᵢᵀ M⁻² jᵢ)
//! ∂f/∂q_k  = −2 Σᵢ wᵢ (M⁻² jᵢ)ᵀ ∂jᵢ/∂q_k
//! ```

use std::ops::Deref;

use crate::dense::{dot, gram_cholesky, second_difference, CholeskyFactor, DenseMatrix};
use crate::error::{Error, Result};
use crate::sqp::{LinearEquality, Nlp};

/// `h(z) = −z⁻²`.
#[inline]
pub fn precondition(f: f64) -> f64 {
    -1.0 / (f * f)
}

/// `h′(z) = 2z⁻³`.
#[inline]
pub fn precondition_d1(f: f64) -> f64 {
    2.0 / (f * f * f)
}

/// `h″(z) = −6z⁻⁴`.
#[inline]
pub fn precondition_d2(f: f64) -> f64 {
    let f2 = f * f;
    -6.0 / (f2 * f2)
}

/// A Jacobian `J(q)` that depends on experimental controls.
pub trait ControlledJacobian: Send {
    fn num_controls(&self) -> usize;

    fn jacobian(&self, q: &[f64]) -> Result<DenseMatrix>;

    /// `J(q)` together with `∂J/∂q_k` for every control `k`.
    fn jacobian_with_derivatives(&self, q: &[f64]) -> Result<(DenseMatrix, Vec<DenseMatrix>)>;
}

/// Source of the candidate measurement rows.
pub enum JacobianProvider {
    Fixed(DenseMatrix),
    Controlled(Box<dyn ControlledJacobian>),
}

impl JacobianProvider {
    pub fn num_controls(&self) -> usize {
        match self {
            JacobianProvider::Fixed(_) => 0,
            JacobianProvider::Controlled(c) => c.num_controls(),
        }
    }

    pub fn jacobian(&self, q: &[f64]) -> Result<DenseMatrix> {
        match self {
            JacobianProvider::Fixed(j) => Ok(j.clone()),
            JacobianProvider::Controlled(c) => c.jacobian(q),
        }
    }

    pub fn jacobian_with_derivatives(&self, q: &[f64]) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
        match self {
            JacobianProvider::Fixed(_) => Err(Error::MissingJacobianDerivative),
            JacobianProvider::Controlled(c) => c.jacobian_with_derivatives(q),
        }
    }
}

impl std::fmt::Debug for JacobianProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JacobianProvider::Fixed(j) => write!(f, "Fixed({}x{})", j.rows(), j.cols()),
            JacobianProvider::Controlled(c) => {
                write!(f, "Controlled({} controls)", c.num_controls())
            }
        }
    }
}

/// A relaxed A-optimal design problem over `Ω(m_max, m) × Θ`.
#[derive(Debug)]
pub struct DesignProblem {
    provider: JacobianProvider,
    num_candidates: usize,
    num_params: usize,
    prior_alpha: Option<f64>,
    m_max: usize,
    control_bounds: Vec<(f64, f64)>,
    preconditioned: bool,
}

impl DesignProblem {
    /// Design problem over a fixed Jacobian (no controls).
    pub fn fixed(
        j: DenseMatrix,
        m_max: usize,
        prior_alpha: Option<f64>,
        preconditioned: bool,
    ) -> Result<Self> {
        let (m, n) = (j.rows(), j.cols());
        Self::build(
            JacobianProvider::Fixed(j),
            m,
            n,
            m_max,
            prior_alpha,
            Vec::new(),
            preconditioned,
        )
    }

    /// Design problem whose Jacobian depends on controls bounded by `control_bounds`.
    pub fn controlled(
        provider: Box<dyn ControlledJacobian>,
        num_candidates: usize,
        num_params: usize,
        m_max: usize,
        prior_alpha: Option<f64>,
        control_bounds: Vec<(f64, f64)>,
        preconditioned: bool,
    ) -> Result<Self> {
        if provider.num_controls() != control_bounds.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} controls but {} bound pairs",
                provider.num_controls(),
                control_bounds.len()
            )));
        }
        Self::build(
            JacobianProvider::Controlled(provider),
            num_candidates,
            num_params,
            m_max,
            prior_alpha,
            control_bounds,
            preconditioned,
        )
    }

    fn build(
        provider: JacobianProvider,
        num_candidates: usize,
        num_params: usize,
        m_max: usize,
        prior_alpha: Option<f64>,
        control_bounds: Vec<(f64, f64)>,
        preconditioned: bool,
    ) -> Result<Self> {
        if m_max >= num_candidates {
            return Err(Error::InvalidInput(format!(
                "budget {m_max} must be below the candidate count {num_candidates}"
            )));
        }
        if let Some(a) = prior_alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "prior alpha {a} must be positive"
                )));
            }
        }
        if let Some((k, _)) = control_bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo < hi))
        {
            return Err(Error::InvalidInput(format!("control {k} has empty bounds")));
        }
        Ok(Self {
            provider,
            num_candidates,
            num_params,
            prior_alpha,
            m_max,
            control_bounds,
            preconditioned,
        })
    }

    pub fn provider(&self) -> &JacobianProvider {
        &self.provider
    }

    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_controls(&self) -> usize {
        self.control_bounds.len()
    }

    pub fn prior_alpha(&self) -> Option<f64> {
        self.prior_alpha
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn control_bounds(&self) -> &[(f64, f64)] {
        &self.control_bounds
    }

    pub fn preconditioned(&self) -> bool {
        self.preconditioned
    }

    pub fn set_preconditioned(&mut self, on: bool) {
        self.preconditioned = on;
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_candidates {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} candidates",
                w.len(),
                self.num_candidates
            )));
        }
        if let Some(i) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weight {i} = {} is negative",
                w[i]
            )));
        }
        Ok(())
    }

    fn jacobian_at(&self, q: &[f64]) -> Result<DenseMatrix> {
        let j = self.provider.jacobian(q)?;
        if j.rows() != self.num_candidates || j.cols() != self.num_params {
            return Err(Error::DimensionMismatch(format!(
                "provider returned a {}x{} Jacobian, expected {}x{}",
                j.rows(),
                j.cols(),
                self.num_candidates,
                self.num_params
            )));
        }
        Ok(j)
    }
}

/// Weights of a relaxed design.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Weights in `Ω(m_max, m)`: entries in `[0, 1]` summing to `m_max` within 1e-10.
    pub fn feasible(w: Vec<f64>, m_max: usize) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "weight {i} = {} outside [0, 1]",
                w[i]
            )));
        }
        let sum: f64 = w.iter().sum();
        if (sum - m_max as f64).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {sum}, expected {m_max}"
            )));
        }
        Ok(Self(w))
    }

    /// All weights equal to `m_max / m`.
    pub fn uniform(m: usize, m_max: usize) -> Self {
        Self(vec![m_max as f64 / m as f64; m])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `[α⁻¹I +] Σᵢ wᵢ jᵢ jᵢᵀ`, exactly symmetric.
pub fn assemble_information(j: &DenseMatrix, w: &[f64], prior_alpha: Option<f64>) -> DenseMatrix {
    let (m, n) = (j.rows(), j.cols());
    debug_assert_eq!(w.len(), m);
    let mut m_info = DenseMatrix::zeros(n, n);
    let mut weighted = vec![0.0; m];
    for b in 0..n {
        let jb = j.column(b);
        for i in 0..m {
            weighted[i] = w[i] * jb[i];
        }
        for a in b..n {
            let v = dot(j.column(a), &weighted);
            m_info[(a, b)] = v;
            m_info[(b, a)] = v;
        }
    }
    if let Some(alpha) = prior_alpha {
        for k in 0..n {
            m_info[(k, k)] += 1.0 / alpha;
        }
    }
    m_info
}

/// `[W^½ J; α^(-½) I]`, whose Gram matrix is the information matrix.
/// Rows with zero weight are dropped.
fn weighted_rows(j: &DenseMatrix, w: &[f64], prior_alpha: Option<f64>) -> DenseMatrix {
    let n = j.cols();
    let kept: Vec<usize> = (0..j.rows()).filter(|&i| w[i] != 0.0).collect();
    let prior_rows = if prior_alpha.is_some() { n } else { 0 };
    let rows = kept.len() + prior_rows;
    let mut data = Vec::with_capacity(rows * n);
    for c in 0..n {
        let col = j.column(c);
        data.extend(kept.iter().map(|&i| w[i].sqrt() * col[i]));
        if let Some(alpha) = prior_alpha {
            let s = alpha.sqrt().recip();
            data.extend((0..n).map(|k| if k == c { s } else { 0.0 }));
        }
    }
    DenseMatrix::from_col_major(rows, n, data).expect("finite by construction")
}

/// Factored information matrix at one design, shared by all derivative routines.
pub struct InformationEval<'a> {
    j: &'a DenseMatrix,
    factor: CholeskyFactor,
    /// `M⁻¹ Jᵀ`, one column per candidate row.
    y: DenseMatrix,
    trace: f64,
}

impl<'a> InformationEval<'a> {
    /// Factors `M` through a QR of `[W^½ J; α^(-½) I]` rather than forming it.
    pub fn new(j: &'a DenseMatrix, w: &[f64], prior_alpha: Option<f64>) -> Result<Self> {
        let rows = weighted_rows(j, w, prior_alpha);
        if rows.rows() < rows.cols() {
            return Err(Error::SingularInformationMatrix);
        }
        let factor = gram_cholesky(&rows).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } | Error::NonFiniteValue(_) => {
                Error::SingularInformationMatrix
            }
            other => other,
        })?;
        let trace = factor.trace_of_inverse();
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(Error::SingularInformationMatrix);
        }
        let y = factor.solve_matrix(&j.transpose());
        Ok(Self {
            j,
            factor,
            y,
            trace,
        })
    }

    /// `Tr(M⁻¹)`.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn value(&self, preconditioned: bool) -> f64 {
        if preconditioned {
            precondition(self.trace)
        } else {
            self.trace
        }
    }

    fn raw_gradient_w(&self) -> Vec<f64> {
        (0..self.y.cols())
            .map(|i| {
                let yi = self.y.column(i);
                -dot(yi, yi)
            })
            .collect()
    }

    pub fn gradient_w(&self, preconditioned: bool) -> Vec<f64> {
        let mut g = self.raw_gradient_w();
        if preconditioned {
            let s = precondition_d1(self.trace);
            g.iter_mut().for_each(|v| *v *= s);
        }
        g
    }

    pub fn hessian_w_diagonal(&self, preconditioned: bool) -> Vec<f64> {
        let (d1, d2) = (precondition_d1(self.trace), precondition_d2(self.trace));
        (0..self.y.cols())
            .map(|i| {
                let yi = self.y.column(i);
                let ji: Vec<f64> = self.j.row(i);
                let quad_m1 = dot(&ji, yi);
                let quad_m2 = dot(yi, yi);
                let raw = 2.0 * quad_m1 * quad_m2;
                if preconditioned {
                    d2 * quad_m2 * quad_m2 + d1 * raw
                } else {
                    raw
                }
            })
            .collect()
    }

    /// Control gradient from `∂J/∂q_k`.
    pub fn gradient_q(&self, w: &[f64], dj: &[DenseMatrix], preconditioned: bool) -> Vec<f64> {
        // Z = M⁻² Jᵀ
        let z = self.factor.solve_matrix(&self.y);
        let scale = if preconditioned {
            precondition_d1(self.trace)
        } else {
            1.0
        };
        dj.iter()
            .map(|djk| {
                let mut acc = 0.0;
                for (i, &wi) in w.iter().enumerate() {
                    if wi == 0.0 {
                        continue;
                    }
                    let zi = z.column(i);
                    let mut s = 0.0;
                    for (c, &zc) in zi.iter().enumerate() {
                        s += zc * djk[(i, c)];
                    }
                    acc += wi * s;
                }
                -2.0 * acc * scale
            })
            .collect()
    }
}

/// `M(w, q) = [α⁻¹I +] J(q)ᵀ W(w) J(q)`.
pub fn information_matrix(p: &DesignProblem, w: &[f64], q: &[f64]) -> Result<DenseMatrix> {
    p.check_weights(w)?;
    let j = p.jacobian_at(q)?;
    Ok(assemble_information(&j, w, p.prior_alpha))
}

/// `Tr(M⁻¹)`, or `−Tr(M⁻¹)⁻²` for a preconditioned problem.
pub fn objective(p: &DesignProblem, w: &[f64], q: &[f64]) -> Result<f64> {
    p.check_weights(w)?;
    let j = p.jacobian_at(q)?;
    Ok(InformationEval::new(&j, w, p.prior_alpha)?.value(p.preconditioned))
}

pub fn gradient_w(p: &DesignProblem, w: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    p.check_weights(w)?;
    let j = p.jacobian_at(q)?;
    Ok(InformationEval::new(&j, w, p.prior_alpha)?.gradient_w(p.preconditioned))
}

pub fn gradient_q(p: &DesignProblem, w: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    p.check_weights(w)?;
    let (j, dj) = p.provider.jacobian_with_derivatives(q)?;
    let eval = InformationEval::new(&j, w, p.prior_alpha)?;
    Ok(eval.gradient_q(w, &dj, p.preconditioned))
}

pub fn hessian_w_diagonal(p: &DesignProblem, w: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    p.check_weights(w)?;
    let j = p.jacobian_at(q)?;
    Ok(InformationEval::new(&j, w, p.prior_alpha)?.hessian_w_diagonal(p.preconditioned))
}

/// Relative step for the second differences over controls.
const CONTROL_CURVATURE_STEP: f64 = 1e-3;

/// The design problem as a nonlinear program over `x = (w, q)`.
///
/// Caches the Jacobian (and its control derivatives) of the last control
/// vector, so objective and gradient at the same point share one evaluation.
pub struct DesignNlp {
    problem: DesignProblem,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cache: Option<(Vec<f64>, DenseMatrix, Option<Vec<DenseMatrix>>)>,
}

impl DesignNlp {
    pub fn new(problem: DesignProblem) -> Self {
        let m = problem.num_candidates;
        let mut lower = vec![0.0; m];
        let mut upper = vec![1.0; m];
        for &(lo, hi) in &problem.control_bounds {
            lower.push(lo);
            upper.push(hi);
        }
        Self {
            problem,
            lower,
            upper,
            cache: None,
        }
    }

    pub fn problem(&self) -> &DesignProblem {
        &self.problem
    }

    pub fn into_problem(self) -> DesignProblem {
        self.problem
    }

    /// Splits `x` into weights and controls.
    pub fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        x.split_at(self.problem.num_candidates)
    }

    fn jacobian(&mut self, q: &[f64], with_derivatives: bool) -> Result<()> {
        let hit = match &self.cache {
            Some((cq, _, dj)) => cq.as_slice() == q && (!with_derivatives || dj.is_some()),
            None => false,
        };
        if hit {
            return Ok(());
        }
        self.cache = None;
        let entry = if with_derivatives {
            let (j, dj) = self.problem.provider.jacobian_with_derivatives(q)?;
            (q.to_vec(), j, Some(dj))
        } else {
            (q.to_vec(), self.problem.jacobian_at(q)?, None)
        };
        self.cache = Some(entry);
        Ok(())
    }

    fn with_eval<T>(
        &mut self,
        x: &[f64],
        with_derivatives: bool,
        f: impl FnOnce(&InformationEval<'_>, &[f64], Option<&[DenseMatrix]>) -> T,
    ) -> Result<T> {
        let m = self.problem.num_candidates;
        let (w, q) = x.split_at(m);
        self.problem.check_weights(w)?;
        self.jacobian(q, with_derivatives)?;
        let (_, j, dj) = self.cache.as_ref().expect("populated above");
        let eval = InformationEval::new(j, w, self.problem.prior_alpha)?;
        Ok(f(&eval, w, dj.as_deref()))
    }
}

impl Nlp for DesignNlp {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn equality(&self) -> Option<LinearEquality> {
        let mut coeffs = vec![1.0; self.problem.num_candidates];
        coeffs.resize(self.dim(), 0.0);
        Some(LinearEquality {
            coeffs,
            rhs: self.problem.m_max as f64,
        })
    }

    fn objective(&mut self, x: &[f64]) -> Result<f64> {
        let pre = self.problem.preconditioned;
        self.with_eval(x, false, |e, _, _| e.value(pre))
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.problem.preconditioned;
        let controlled = self.problem.num_controls() > 0;
        self.with_eval(x, controlled, |e, w, dj| {
            let mut g = e.gradient_w(pre);
            if let Some(dj) = dj {
                g.extend(e.gradient_q(w, dj, pre));
            }
            g
        })
    }

    fn initial_hessian_diagonal(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.problem.preconditioned;
        let mut diag = self.with_eval(x, false, |e, _, _| e.hessian_w_diagonal(pre))?;
        let m = self.problem.num_candidates;
        for k in 0..self.problem.num_controls() {
            let h = CONTROL_CURVATURE_STEP * (1.0 + x[m + k].abs());
            let d = second_difference(|probe| self.objective(probe), x, m + k, h)?;
            diag.push(d);
        }
        Ok(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{finite_difference_gradient, random_design_matrix, RngStream};

    fn eye2() -> DenseMatrix {
        DenseMatrix::identity(2)
    }

    /// `J(q) = q I₂`, a one-control provider with closed-form derivatives.
    struct ScaledIdentity;

    impl ControlledJacobian for ScaledIdentity {
        fn num_controls(&self) -> usize {
            1
        }

        fn jacobian(&self, q: &[f64]) -> Result<DenseMatrix> {
            let mut j = DenseMatrix::identity(2);
            j.scale(q[0]);
            Ok(j)
        }

        fn jacobian_with_derivatives(&self, q: &[f64]) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
            Ok((self.jacobian(q)?, vec![DenseMatrix::identity(2)]))
        }
    }

    /// Provider whose Jacobian does not depend on the control.
    struct Frozen(DenseMatrix);

    impl ControlledJacobian for Frozen {
        fn num_controls(&self) -> usize {
            2
        }

        fn jacobian(&self, _q: &[f64]) -> Result<DenseMatrix> {
            Ok(self.0.clone())
        }

        fn jacobian_with_derivatives(&self, _q: &[f64]) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
            let z = DenseMatrix::zeros(self.0.rows(), self.0.cols());
            Ok((self.0.clone(), vec![z.clone(), z]))
        }
    }

    fn random_instance(
        seed: u64,
        m: usize,
        n: usize,
        alpha: Option<f64>,
        pre: bool,
    ) -> (DesignProblem, Vec<f64>) {
        let mut rng = RngStream::new(seed);
        let j = random_design_matrix(m, n, 10.0, false, &mut rng).unwrap();
        let m_max = m / 2;
        let raw: Vec<f64> = (0..m).map(|_| rng.uniform(0.2, 1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w = raw.iter().map(|v| v * m_max as f64 / s).collect();
        (DesignProblem::fixed(j, m_max, alpha, pre).unwrap(), w)
    }

    #[test]
    fn information_matrix_examples() {
        let p = DesignProblem::fixed(eye2(), 1, None, false).unwrap();
        assert_eq!(information_matrix(&p, &[1.0, 1.0], &[]).unwrap(), eye2());
        let p = DesignProblem::fixed(eye2(), 1, Some(1.0), false).unwrap();
        let m = information_matrix(&p, &[1.0, 1.0], &[]).unwrap();
        assert_eq!(m, DenseMatrix::from_diagonal(&[2.0, 2.0]));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let j = DenseMatrix::from_rows(&[vec![s, s], vec![s, -s]]).unwrap();
        let alpha = 0.3;
        let p = DesignProblem::fixed(j.clone(), 1, Some(alpha), false).unwrap();
        let m = information_matrix(&p, &[0.5, 0.5], &[]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut expect = 0.5 * j[(0, a)] * j[(0, b)] + 0.5 * j[(1, a)] * j[(1, b)];
                if a == b {
                    expect += 1.0 / alpha;
                }
                assert!((m[(a, b)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn information_matrix_is_bitwise_symmetric() {
        let (p, w) = random_instance(3, 12, 4, Some(0.1), false);
        let m = information_matrix(&p, &w, &[]).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(m[(a, b)].to_bits(), m[(b, a)].to_bits());
            }
        }
    }

    #[test]
    fn objective_examples() {
        let p = DesignProblem::fixed(eye2(), 1, None, false).unwrap();
        assert!((objective(&p, &[1.0, 1.0], &[]).unwrap() - 2.0).abs() < 1e-15);

        // Orthonormal rows, α = 1, w = ½: 2α − α²/(1 + α/2) = 4/3.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let j = DenseMatrix::from_rows(&[vec![s, s], vec![-s, s]]).unwrap();
        let mut p = DesignProblem::fixed(j, 1, Some(1.0), false).unwrap();
        assert!((objective(&p, &[0.5, 0.5], &[]).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        p.set_preconditioned(true);
        assert!((objective(&p, &[0.5, 0.5], &[]).unwrap() + 9.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn singular_information_is_reported() {
        let p = DesignProblem::fixed(eye2(), 1, None, false).unwrap();
        assert_eq!(
            objective(&p, &[1.0, 0.0], &[]).unwrap_err(),
            Error::SingularInformationMatrix
        );
    }

    #[test]
    fn objective_sign_by_variant() {
        for pre in [false, true] {
            let (p, w) = random_instance(8, 10, 3, Some(0.5), pre);
            let f = objective(&p, &w, &[]).unwrap();
            assert!(if pre { f < 0.0 } else { f > 0.0 });
        }
    }

    #[test]
    fn gradient_examples() {
        let p = DesignProblem::fixed(eye2(), 1, None, false).unwrap();
        assert_eq!(gradient_w(&p, &[1.0, 1.0], &[]).unwrap(), vec![-1.0, -1.0]);
        assert_eq!(
            hessian_w_diagonal(&p, &[1.0, 1.0], &[]).unwrap(),
            vec![2.0, 2.0]
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, alpha, pre) in [
            (1, None, false),
            (2, Some(0.3), false),
            (3, None, true),
            (4, Some(2.0), true),
        ] {
            let (p, w) = random_instance(seed, 10, 3, alpha, pre);
            let g = gradient_w(&p, &w, &[]).unwrap();
            let fd =
                finite_difference_gradient(|x| objective(&p, x, &[]).unwrap(), &w, 1e-6).unwrap();
            for (a, b) in g.iter().zip(&fd) {
                assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
            }
            if !pre {
                assert!(g.iter().all(|&v| v <= 0.0));
            }
        }
    }

    #[test]
    fn hessian_diagonal_matches_second_differences() {
        for (seed, pre) in [(5, false), (6, true)] {
            let (p, w) = random_instance(seed, 8, 3, Some(1.0), pre);
            let d = hessian_w_diagonal(&p, &w, &[]).unwrap();
            for i in 0..w.len() {
                let coarse = second_difference(|x| objective(&p, x, &[]), &w, i, 2e-3).unwrap();
                let fine = second_difference(|x| objective(&p, x, &[]), &w, i, 1e-3).unwrap();
                let fd = (4.0 * fine - coarse) / 3.0;
                assert!(((d[i] - fd) / fd).abs() < 1e-4, "{i}: {} vs {fd}", d[i]);
                if !pre {
                    assert!(d[i] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn control_gradient_scalar_case() {
        let p = DesignProblem::controlled(
            Box::new(ScaledIdentity),
            2,
            2,
            1,
            None,
            vec![(0.1, 3.0)],
            false,
        )
        .unwrap();
        let g = gradient_q(&p, &[1.0, 1.0], &[1.0]).unwrap();
        assert!((g[0] + 4.0).abs() < 1e-14);
        let g = gradient_q(&p, &[1.0, 1.0], &[2.0]).unwrap();
        assert!((g[0] + 4.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn control_gradient_vanishes_without_dependence() {
        let j = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let bounds = vec![(-1.0, 1.0), (-1.0, 1.0)];
        let p =
            DesignProblem::controlled(Box::new(Frozen(j)), 3, 2, 2, None, bounds, true).unwrap();
        let g = gradient_q(&p, &[0.5, 0.5, 1.0], &[0.0, 0.3]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn fixed_provider_has_no_control_derivatives() {
        let p = DesignProblem::fixed(eye2(), 1, None, false).unwrap();
        assert_eq!(
            gradient_q(&p, &[1.0, 1.0], &[]).unwrap_err(),
            Error::MissingJacobianDerivative
        );
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(DesignProblem::fixed(eye2(), 2, None, false).is_err());
        assert!(DesignProblem::fixed(eye2(), 1, Some(0.0), false).is_err());
        assert!(DesignProblem::controlled(
            Box::new(ScaledIdentity),
            2,
            2,
            1,
            None,
            vec![(1.0, 1.0)],
            false
        )
        .is_err());
        assert!(WeightVector::feasible(vec![0.5, 0.5], 1).is_ok());
        assert!(WeightVector::feasible(vec![1.5, -0.5], 1).is_err());
        assert!(WeightVector::feasible(vec![0.5, 0.4], 1).is_err());
    }

    #[test]
    fn nlp_adapter_concatenates_controls() {
        let p = DesignProblem::controlled(
            Box::new(ScaledIdentity),
            2,
            2,
            1,
            None,
            vec![(0.1, 3.0)],
            true,
        )
        .unwrap();
        let mut nlp = DesignNlp::new(p);
        assert_eq!(nlp.dim(), 3);
        assert_eq!(nlp.upper_bounds(), &[1.0, 1.0, 3.0]);
        let eq = nlp.equality().unwrap();
        assert_eq!(eq.coeffs, vec![1.0, 1.0, 0.0]);
        let x = [0.6, 0.4, 1.3];
        let g = nlp.gradient(&x).unwrap();
        let fd = finite_difference_gradient(|x| nlp.objective(x).unwrap(), &x, 1e-6).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!(((a - b) / b).abs() < 1e-6);
        }
        let d = nlp.initial_hessian_diagonal(&x).unwrap();
        assert_eq!(d.len(), 3);
    }
}
