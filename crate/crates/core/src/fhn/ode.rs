//! Dormand-Prince 5(4) with the standard fourth-order continuous extension.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub const MIN_STEP: f64 = 1e-12;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-10,
            abs: 1e-12,
        }
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already set.
    /// Writes the fifth-order solution to `y_new` and `k[6] = f(t + h, y_new)`.
    fn step<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64, y_new: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let Stages { k, tmp } = self;
        let [k1, k2, k3, k4, k5, k6, k7] = k;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, tmp, k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, y_new, k7);
    }

    fn error_norm(&self, y: &[f64], y_new: &[f64], h: f64, tol: &Tolerances) -> f64 {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let n = y.len();
        let mut acc = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        (acc / n as f64).sqrt()
    }

    /// Evaluates the continuous extension at `theta ∈ [0, 1]` of the last step.
    fn interpolate(&self, y: &[f64], y_new: &[f64], h: f64, theta: f64, out: &mut [f64]) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let theta1 = 1.0 - theta;
        for i in 0..y.len() {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            let r4 = ydiff - h * k7[i] - bspl;
            let r5 =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            out[i] = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
        }
    }
}

/// Integrates `y′ = rhs(t, y)` from `t0` and returns the state at each of
/// `outputs` (nondecreasing, all `≥ t0`), using adaptive steps and dense output.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: &Tolerances,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidInput(
            "output times must be sorted and >= t0".into(),
        ));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        out.push(y0.to_vec());
        next_out += 1;
    }
    let Some(&t_end) = outputs.last() else {
        return Ok(out);
    };
    if next_out == outputs.len() {
        return Ok(out);
    }

    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut t = t0;
    rhs(t, &y, &mut st.k[0]);
    let mut h = initial_step(&mut rhs, t0, y0, &st.k[0], tol, t_end - t0);
    let mut buf = vec![0.0; n];

    for _ in 0..MAX_STEPS {
        if h < MIN_STEP {
            return Err(Error::StepSizeUnderflow { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        st.step(&mut rhs, t, &y, h, &mut y_new);
        let err = st.error_norm(&y, &y_new, h, tol);
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let to = outputs[next_out];
                if to == t_new {
                    out.push(y_new.clone());
                } else {
                    st.interpolate(&y, &y_new, h, (to - t) / h, &mut buf);
                    out.push(buf.clone());
                }
                next_out += 1;
            }
            if next_out == outputs.len() {
                return Ok(out);
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            let (head, tail) = st.k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Err(Error::StepSizeUnderflow { t })
}

/// Fixed-step integration to `t1` with steps of (at most) `h`.
pub fn integrate_fixed<F>(mut rhs: F, t0: f64, y0: &[f64], t1: f64, h: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let steps = ((t1 - t0) / h).round().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut t = t0;
    for _ in 0..steps {
        rhs(t, &y, &mut st.k[0]);
        st.step(&mut rhs, t, &y, h, &mut y_new);
        std::mem::swap(&mut y, &mut y_new);
        t += h;
    }
    y
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], tol: &Tolerances, span: f64) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|v| tol.abs + tol.rel * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).max(MIN_STEP)
}
