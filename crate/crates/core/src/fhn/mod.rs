//! FitzHugh-Nagumo dynamics with controls and forward sensitivities.
//!
//! ```text
//! ẋ₁ = x₁ − z x₁³ − x₂ + I,   x₁(0) = x₀₁
//! ẋ₂ = a (x₁ + b + c x₂),     x₂(0) = x₀₂
//! ```
//!
//! Parameters `p = (z, a, b, c)` are the quantities to be estimated, controls
//! `q = (I, x₀₁, x₀₂)` are chosen by the experimenter. Both state components
//! are observed at every measurement time, so `T` times give `2T` candidate
//! measurements.

pub mod ode;

use std::io::Write;

use crate::criterion::{assemble_information, ControlledJacobian};
use crate::dense::{trace_of_inverse, DenseMatrix, RngStream};
use crate::error::{Error, Result};
pub use ode::Tolerances;

pub const NUM_PARAMS: usize = 4;
pub const NUM_CONTROLS: usize = 3;

/// Nominal `(z, a, b, c)`.
pub const NOMINAL_PARAMS: [f64; NUM_PARAMS] = [0.25, 0.02, 0.7, -0.8];

/// Closed boxes for `(I, x₀₁, x₀₂)`.
pub const CONTROL_BOUNDS: [(f64, f64); NUM_CONTROLS] = [(-1.0, 0.5), (-5.0, 5.0), (-5.0, 5.0)];

/// Spacing of the measurement grid `tᵢ = 5i`.
pub const MEASUREMENT_SPACING: f64 = 5.0;

/// Default number of measurement times.
pub const DEFAULT_TIMES: usize = 100;

/// Trace bound used when screening random initial controls.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 100.0;

const FILTER_MAX_DRAWS: usize = 1000;

/// Relative step for the finite differences of `S_p` over controls.
const CONTROL_FD_STEP: f64 = 1e-5;

// Layout of the augmented state: x, then S_p column by column, then S_q.
const SP_OFFSET: usize = 2;
const SQ_OFFSET: usize = SP_OFFSET + 2 * NUM_PARAMS;
const AUGMENTED_DIM: usize = SQ_OFFSET + 2 * NUM_CONTROLS;

#[derive(Debug, Clone, PartialEq)]
pub struct FhnModel {
    pub params: [f64; NUM_PARAMS],
    pub controls: [f64; NUM_CONTROLS],
    times: Vec<f64>,
}

impl FhnModel {
    /// Nominal parameters with measurement times `5, 10, …, 5T`.
    pub fn new(num_times: usize, controls: [f64; NUM_CONTROLS]) -> Self {
        let times = (1..=num_times)
            .map(|i| MEASUREMENT_SPACING * i as f64)
            .collect();
        Self {
            params: NOMINAL_PARAMS,
            controls,
            times,
        }
    }

    /// Replaces the measurement times. They must be positive and increasing.
    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.first().is_some_and(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "measurement times must be positive and increasing".into(),
            ));
        }
        self.times = times;
        Ok(self)
    }

    pub fn with_controls(&self, controls: [f64; NUM_CONTROLS]) -> Self {
        Self {
            controls,
            ..self.clone()
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of candidate measurements, `2T`.
    pub fn num_candidates(&self) -> usize {
        2 * self.times.len()
    }

    /// Right-hand side of the state equations alone.
    pub fn state_rhs(&self, x: &[f64], dx: &mut [f64]) {
        let [z, a, b, c] = self.params;
        let input = self.controls[0];
        dx[0] = x[0] - z * x[0].powi(3) - x[1] + input;
        dx[1] = a * (x[0] + b + c * x[1]);
    }

    /// Right-hand side of the state plus variational equations.
    fn augmented_rhs(&self, y: &[f64], dy: &mut [f64]) {
        let [z, a, b, c] = self.params;
        let (x1, x2) = (y[0], y[1]);
        self.state_rhs(&y[..2], &mut dy[..2]);
        let fx = [[1.0 - 3.0 * z * x1 * x1, -1.0], [a, a * c]];
        let forcing_p = [
            [-x1.powi(3), 0.0],
            [0.0, x1 + b + c * x2],
            [0.0, a],
            [0.0, a * x2],
        ];
        let forcing_q = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let columns = forcing_p.iter().chain(forcing_q.iter());
        for (k, phi) in columns.enumerate() {
            let o = SP_OFFSET + 2 * k;
            let (s1, s2) = (y[o], y[o + 1]);
            dy[o] = fx[0][0] * s1 + fx[0][1] * s2 + phi[0];
            dy[o + 1] = fx[1][0] * s1 + fx[1][1] * s2 + phi[1];
        }
    }

    fn check_controls(&self) -> Result<()> {
        for (k, (&v, &(lo, hi))) in self.controls.iter().zip(&CONTROL_BOUNDS).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(Error::InvalidInput(format!(
                    "control {k} = {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// States and first-order sensitivities on the measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    /// `∂x/∂p` at each time, indexed `[time][state][param]`.
    pub s_p: Vec<[[f64; NUM_PARAMS]; 2]>,
    /// `∂x/∂q` at each time, indexed `[time][state][control]`.
    pub s_q: Vec<[[f64; NUM_CONTROLS]; 2]>,
}

impl SensitivityTrajectory {
    /// `J` with rows ordered `x₁@t₁, x₂@t₁, x₁@t₂, …` and one column per parameter.
    pub fn parameter_jacobian(&self) -> DenseMatrix {
        let mut j = DenseMatrix::zeros(2 * self.times.len(), NUM_PARAMS);
        for (i, block) in self.s_p.iter().enumerate() {
            for (s, row) in block.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    j.column_mut(k)[2 * i + s] = v;
                }
            }
        }
        j
    }

    /// Writes `t, x1, x2` and, optionally, every sensitivity entry as CSV.
    pub fn write_csv<W: Write>(&self, out: W, include_sensitivities: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "x1".into(), "x2".into()];
        if include_sensitivities {
            for s in 1..=2 {
                for name in ["z", "a", "b", "c"] {
                    header.push(format!("dx{s}_d{name}"));
                }
            }
            for s in 1..=2 {
                for name in ["I", "x01", "x02"] {
                    header.push(format!("dx{s}_d{name}"));
                }
            }
        }
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i], self.states[i][0], self.states[i][1]];
            if include_sensitivities {
                row.extend(self.s_p[i].iter().flatten());
                row.extend(self.s_q[i].iter().flatten());
            }
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates states and sensitivities from `t = 0` to every measurement time.
pub fn integrate_with_sensitivities(
    model: &FhnModel,
    tol: &Tolerances,
) -> Result<SensitivityTrajectory> {
    model.check_controls()?;
    let mut y0 = vec![0.0; AUGMENTED_DIM];
    y0[0] = model.controls[1];
    y0[1] = model.controls[2];
    // ∂x(0)/∂x₀ is the identity; ∂x(0)/∂I and ∂x(0)/∂p vanish.
    y0[SQ_OFFSET + 2] = 1.0;
    y0[SQ_OFFSET + 5] = 1.0;
    let out = ode::integrate_adaptive(
        |_, y, dy| model.augmented_rhs(y, dy),
        0.0,
        &y0,
        &model.times,
        tol,
    )?;
    let mut traj = SensitivityTrajectory {
        times: model.times.clone(),
        states: Vec::with_capacity(out.len()),
        s_p: Vec::with_capacity(out.len()),
        s_q: Vec::with_capacity(out.len()),
    };
    for y in &out {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("FitzHugh-Nagumo trajectory".into()));
        }
        traj.states.push([y[0], y[1]]);
        traj.s_p.push(std::array::from_fn(|s| {
            std::array::from_fn(|k| y[SP_OFFSET + 2 * k + s])
        }));
        traj.s_q.push(std::array::from_fn(|s| {
            std::array::from_fn(|k| y[SQ_OFFSET + 2 * k + s])
        }));
    }
    Ok(traj)
}

/// `J(q)` and `∂J/∂q_k` by central differences of `J` over each control.
pub fn design_jacobian(
    model: &FhnModel,
    q: &[f64; NUM_CONTROLS],
    tol: &Tolerances,
) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
    let at = model.with_controls(*q);
    let j = integrate_with_sensitivities(&at, tol)?.parameter_jacobian();
    let dj = control_derivatives(q, |qq| {
        Ok(integrate_with_sensitivities(&model.with_controls(*qq), tol)?.parameter_jacobian())
    })?;
    Ok((j, dj))
}

/// Central differences of a control-dependent matrix. Steps that would leave
/// the control box are shifted to one-sided differences.
fn control_derivatives<F>(q: &[f64; NUM_CONTROLS], mut jac: F) -> Result<Vec<DenseMatrix>>
where
    F: FnMut(&[f64; NUM_CONTROLS]) -> Result<DenseMatrix>,
{
    let mut out = Vec::with_capacity(NUM_CONTROLS);
    for k in 0..NUM_CONTROLS {
        let h = CONTROL_FD_STEP * (1.0 + q[k].abs());
        let (lo, hi) = CONTROL_BOUNDS[k];
        let (mut qp, mut qm) = (*q, *q);
        qp[k] = (q[k] + h).min(hi);
        qm[k] = (q[k] - h).max(lo);
        let (jp, jm) = (jac(&qp)?, jac(&qm)?);
        let span = qp[k] - qm[k];
        let data = jp
            .as_slice()
            .iter()
            .zip(jm.as_slice())
            .map(|(a, b)| (a - b) / span)
            .collect();
        out.push(DenseMatrix::from_col_major(jp.rows(), jp.cols(), data)?);
    }
    Ok(out)
}

/// Draws controls uniformly from the box until `Tr((JᵀJ)⁻¹) ≤ threshold`.
pub fn initial_guess_filter(
    model: &FhnModel,
    rng: &mut RngStream,
    threshold: f64,
    tol: &Tolerances,
) -> Result<[f64; NUM_CONTROLS]> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!(
            "threshold {threshold} must be positive"
        )));
    }
    for _ in 0..FILTER_MAX_DRAWS {
        let q: [f64; NUM_CONTROLS] = std::array::from_fn(|k| {
            let (lo, hi) = CONTROL_BOUNDS[k];
            rng.uniform(lo, hi)
        });
        if let Some(trace) = full_weight_trace(model, &q, tol) {
            if trace <= threshold {
                return Ok(q);
            }
        }
    }
    Err(Error::FilterExhausted(FILTER_MAX_DRAWS))
}

/// `Tr((JᵀJ)⁻¹)` at `q`, or `None` if the integration or factorization fails.
pub fn full_weight_trace(
    model: &FhnModel,
    q: &[f64; NUM_CONTROLS],
    tol: &Tolerances,
) -> Option<f64> {
    let traj = integrate_with_sensitivities(&model.with_controls(*q), tol).ok()?;
    let j = traj.parameter_jacobian();
    let ones = vec![1.0; j.rows()];
    trace_of_inverse(&assemble_information(&j, &ones, None)).ok()
}

/// [`ControlledJacobian`] backed by sensitivity integrations.
#[derive(Debug, Clone)]
pub struct FhnJacobian {
    model: FhnModel,
    tol: Tolerances,
}

impl FhnJacobian {
    pub fn new(model: FhnModel, tol: Tolerances) -> Self {
        Self { model, tol }
    }

    pub fn model(&self) -> &FhnModel {
        &self.model
    }

    fn controls(q: &[f64]) -> Result<[f64; NUM_CONTROLS]> {
        q.try_into().map_err(|_| {
            Error::DimensionMismatch(format!("expected {NUM_CONTROLS} controls, got {}", q.len()))
        })
    }
}

impl ControlledJacobian for FhnJacobian {
    fn num_controls(&self) -> usize {
        NUM_CONTROLS
    }

    fn jacobian(&self, q: &[f64]) -> Result<DenseMatrix> {
        let q = Self::controls(q)?;
        Ok(
            integrate_with_sensitivities(&self.model.with_controls(q), &self.tol)?
                .parameter_jacobian(),
        )
    }

    fn jacobian_with_derivatives(&self, q: &[f64]) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
        design_jacobian(&self.model, &Self::controls(q)?, &self.tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn origin_is_an_equilibrium_without_offset_and_input() {
        let mut m = FhnModel::new(20, [0.0, 0.0, 0.0]);
        m.params[2] = 0.0;
        let traj = integrate_with_sensitivities(&m, &tol()).unwrap();
        for x in &traj.states {
            assert!(x[0].abs() <= 1e-12 && x[1].abs() <= 1e-12);
        }
    }

    #[test]
    fn initial_sensitivities() {
        let m = FhnModel::new(3, [0.2, 1.0, 0.5])
            .with_times(vec![1e-12, 1.0])
            .unwrap();
        let traj = integrate_with_sensitivities(&m, &tol()).unwrap();
        let sq = traj.s_q[0];
        assert!(sq[0][0].abs() < 1e-9 && sq[1][0].abs() < 1e-9);
        assert!((sq[0][1] - 1.0).abs() < 1e-9 && (sq[1][2] - 1.0).abs() < 1e-9);
        assert!(sq[0][2].abs() < 1e-9 && sq[1][1].abs() < 1e-9);
        assert!(traj.s_p[0].iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn parameter_sensitivities_match_differences() {
        let m = FhnModel::new(5, [0.2, 1.0, 0.5]);
        let traj = integrate_with_sensitivities(&m, &tol()).unwrap();
        let i = 4;
        for k in 0..NUM_PARAMS {
            let h = 1e-6 * (1.0 + m.params[k].abs());
            let (mut mp, mut mm) = (m.clone(), m.clone());
            mp.params[k] += h;
            mm.params[k] -= h;
            let xp = integrate_with_sensitivities(&mp, &tol()).unwrap().states[i];
            let xm = integrate_with_sensitivities(&mm, &tol()).unwrap().states[i];
            for s in 0..2 {
                let fd = (xp[s] - xm[s]) / (2.0 * h);
                let an = traj.s_p[i][s][k];
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "s={s} k={k}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn jacobian_rows_are_sensitivities() {
        let m = FhnModel::new(6, [0.1, -2.0, 3.0]);
        let traj = integrate_with_sensitivities(&m, &tol()).unwrap();
        let j = traj.parameter_jacobian();
        assert_eq!((j.rows(), j.cols()), (12, 4));
        for i in 0..6 {
            for s in 0..2 {
                for k in 0..4 {
                    assert_eq!(j[(2 * i + s, k)], traj.s_p[i][s][k]);
                }
            }
        }
    }

    #[test]
    fn control_independent_jacobian_has_zero_derivatives() {
        let fixed = FhnModel::new(4, [0.0, 1.0, 1.0]);
        let j = integrate_with_sensitivities(&fixed, &tol())
            .unwrap()
            .parameter_jacobian();
        let dj = control_derivatives(&[0.3, -1.0, 2.0], |_| Ok(j.clone())).unwrap();
        assert_eq!(dj.len(), 3);
        assert!(dj.iter().all(|d| d.max_abs() == 0.0));
    }

    #[test]
    fn filter_respects_threshold_and_box() {
        let m = FhnModel::new(10, [0.0; 3]);
        let mut rng = RngStream::new(7);
        let q = initial_guess_filter(&m, &mut rng, DEFAULT_FILTER_THRESHOLD, &tol()).unwrap();
        for (v, (lo, hi)) in q.iter().zip(CONTROL_BOUNDS) {
            assert!(*v > lo && *v < hi);
        }
        assert!(full_weight_trace(&m, &q, &tol()).unwrap() <= DEFAULT_FILTER_THRESHOLD);
        let again = initial_guess_filter(&m, &mut RngStream::new(7), 100.0, &tol()).unwrap();
        assert_eq!(q, again);
    }

    #[test]
    fn rejects_controls_outside_box() {
        let m = FhnModel::new(2, [0.9, 0.0, 0.0]);
        assert!(matches!(
            integrate_with_sensitivities(&m, &tol()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_export_has_expected_columns() {
        let m = FhnModel::new(3, [0.0, 1.0, 0.0]);
        let traj = integrate_with_sensitivities(&m, &tol()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 3 + 8 + 6);
        assert_eq!(lines.count(), 3);
    }
}
