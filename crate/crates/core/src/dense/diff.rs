use crate::error::{Error, Result};

/// Central-difference gradient `(f(x+heᵢ) − f(x−heᵢ)) / 2h`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step {h} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteValue(format!(
                "evaluation along coordinate {i}"
            )));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Second central difference `(f(x+heᵢ) − 2f(x) + f(x−heᵢ)) / h²` along one coordinate.
pub fn second_difference<F>(mut f: F, x: &[f64], i: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step {h} must be positive")));
    }
    let mut probe = x.to_vec();
    let f0 = f(&probe)?;
    probe[i] = x[i] + h;
    let fp = f(&probe)?;
    probe[i] = x[i] - h;
    let fm = f(&probe)?;
    let v = (fp - 2.0 * f0 + fm) / (h * h);
    if !v.is_finite() {
        return Err(Error::NonFiniteValue(format!(
            "second difference along {i}"
        )));
    }
    Ok(v)
}
