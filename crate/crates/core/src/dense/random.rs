use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Seeded random stream backed by ChaCha8 (a counter-based generator).
///
/// A stream is identified by `(seed, stream)`; equal identities produce
/// bit-identical draws on every platform. [`RngStream::split`] derives
/// independent child streams for parallel trials.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for `index`, independent of the parent's position.
    pub fn split(&self, index: u64) -> Self {
        let stream = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_add(1));
        Self::with_stream(self.seed, stream)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.rng.random();
        lo + (hi - lo) * u
    }
}

const MAX_DRAWS: usize = 3;

/// Random `m × n` matrix `U Σ Vᵀ` with geometrically decaying singular values.
///
/// `U` and `V` are the orthonormal factors of uniform `[-1, 1]` matrices and
/// `σₖ = cond^(−(k−1)/(n−1))`, so `σ₁/σₙ = cond`. With `row_normalize` every
/// row is scaled to unit Euclidean norm afterwards (which perturbs the
/// final condition number).
pub fn random_design_matrix(
    m: usize,
    n: usize,
    cond: f64,
    row_normalize: bool,
    rng: &mut RngStream,
) -> Result<DenseMatrix> {
    if n == 0 || m < n {
        return Err(Error::InvalidInput(format!(
            "random design matrix needs m >= n >= 1, got m={m}, n={n}"
        )));
    }
    if !(cond >= 1.0) || !cond.is_finite() {
        return Err(Error::InvalidInput(format!("condition number {cond} < 1")));
    }

    let u = orthonormal_factor(m, n, rng)?;
    let v = orthonormal_factor(n, n, rng)?;
    let sigma = singular_value_profile(n, cond);

    let mut us = u;
    for (k, &s) in sigma.iter().enumerate() {
        us.column_mut(k).iter_mut().for_each(|x| *x *= s);
    }
    let mut j = us.matmul(&v.transpose())?;

    if row_normalize {
        for i in 0..m {
            let norm = (0..n).map(|c| j[(i, c)] * j[(i, c)]).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateInput(format!("row {i} vanished")));
            }
            for c in 0..n {
                j[(i, c)] /= norm;
            }
        }
    }
    Ok(j)
}

/// `σₖ = cond^(−(k−1)/(n−1))`, all ones when `n = 1`.
pub fn singular_value_profile(n: usize, cond: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| cond.powf(-(k as f64) / (n - 1) as f64))
        .collect()
}

/// Orthonormal `rows × cols` factor of a uniform `[-1, 1]` matrix, redrawn on
/// breakdown.
pub(crate) fn orthonormal_factor(
    rows: usize,
    cols: usize,
    rng: &mut RngStream,
) -> Result<DenseMatrix> {
    for _ in 0..MAX_DRAWS {
        let mut a = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for v in a.column_mut(j) {
                *v = rng.uniform(-1.0, 1.0);
            }
        }
        if let Some(q) = thin_q(a) {
            return Ok(q);
        }
    }
    Err(Error::DegenerateInput(format!(
        "QR broke down on {MAX_DRAWS} consecutive draws"
    )))
}

/// Q factor of a thin QR by modified Gram-Schmidt with one reorthogonalization
/// pass. Returns `None` if a column is numerically dependent on its predecessors.
fn thin_q(mut a: DenseMatrix) -> Option<DenseMatrix> {
    let cols = a.cols();
    for j in 0..cols {
        let original = dot(a.column(j), a.column(j)).sqrt();
        for _pass in 0..2 {
            for k in 0..j {
                let qk = a.column(k).to_vec();
                let col = a.column_mut(j);
                let r = dot(&qk, col);
                col.iter_mut().zip(&qk).for_each(|(x, q)| *x -= r * q);
            }
        }
        let norm = dot(a.column(j), a.column(j)).sqrt();
        if !(norm > 1e-10 * original) || norm == 0.0 {
            return None;
        }
        a.column_mut(j).iter_mut().for_each(|x| *x /= norm);
    }
    Some(a)
}
