use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Maximum relative asymmetry accepted by [`cholesky`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Lower-triangular factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DenseMatrix,
}

/// Factors a symmetric positive-definite matrix.
///
/// A pivot at or below `dim · ε · max(diag M)` is reported as
/// [`Error::NotPositiveDefinite`]; only the lower triangle of `m` is read.
pub fn cholesky(m: &DenseMatrix) -> Result<CholeskyFactor> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.all_finite() {
        return Err(Error::NonFiniteValue("cholesky input".into()));
    }
    if m.asymmetry() > SYMMETRY_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (relative asymmetry {:e})",
            m.asymmetry()
        )));
    }
    factor_lower(m)
}

/// Cholesky without the symmetry check, reading the lower triangle only.
pub(crate) fn factor_lower(m: &DenseMatrix) -> Result<CholeskyFactor> {
    let n = m.rows();
    let max_diag = m.diagonal().iter().fold(0.0_f64, |a, d| a.max(*d));
    let tol = n as f64 * f64::EPSILON * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Cholesky factor of `AᵀA` from a Householder QR of `A`, without forming
/// `AᵀA`. The factor is accurate to `ε·cond(A)` rather than `ε·cond(A)²`.
///
/// Uses the same pivot threshold as [`cholesky`] applied to `AᵀA`.
pub fn gram_cholesky(a: &DenseMatrix) -> Result<CholeskyFactor> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "gram factor of a {m}x{n} matrix"
        )));
    }
    if !a.all_finite() {
        return Err(Error::NonFiniteValue("gram factor input".into()));
    }
    let max_col = (0..n)
        .map(|j| a.column(j).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let tol = n as f64 * f64::EPSILON * max_col;

    let mut r = a.clone();
    let mut v = vec![0.0; m];
    for k in 0..n {
        let col = &r.column(k)[k..];
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm * norm > tol) {
            return Err(Error::NotPositiveDefinite {
                index: k,
                pivot: norm * norm,
            });
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let v = &mut v[..m - k];
        v.copy_from_slice(col);
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for j in k..n {
            let cj = &mut r.column_mut(j)[k..];
            let s: f64 = v.iter().zip(cj.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vv;
            cj.iter_mut().zip(v.iter()).for_each(|(c, vi)| *c -= f * vi);
        }
    }
    // L = Rᵀ with rows of R sign-flipped so the diagonal is positive.
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let sign = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in i..n {
            l.column_mut(i)[j] = sign * r[(i, j)];
        }
    }
    Ok(CholeskyFactor { lower: l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        for j in 0..n {
            let yj = b[j] / self.lower[(j, j)];
            b[j] = yj;
            if yj != 0.0 {
                let col = self.lower.column(j);
                for i in (j + 1)..n {
                    b[i] -= col[i] * yj;
                }
            }
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_solve(&self, y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(y.len(), n);
        for j in (0..n).rev() {
            let col = self.lower.column(j);
            let mut s = y[j];
            for i in (j + 1)..n {
                s -= col[i] * y[i];
            }
            y[j] = s / col[j];
        }
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        for j in 0..b.cols() {
            let col = x.column_mut(j);
            self.forward_solve(col);
            self.backward_solve(col);
        }
        x
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.lower
            .matmul(&self.lower.transpose())
            .expect("square factor")
    }

    /// `Tr(M⁻¹) = ‖L⁻¹‖²_F`, one forward solve per unit vector.
    pub fn trace_of_inverse(&self) -> f64 {
        let n = self.dim();
        let mut total = 0.0;
        let mut e = vec![0.0; n];
        for i in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            // Entries above i stay zero; only the tail needs solving.
            for j in i..n {
                let yj = e[j] / self.lower[(j, j)];
                e[j] = yj;
                let col = self.lower.column(j);
                for k in (j + 1)..n {
                    e[k] -= col[k] * yj;
                }
            }
            total += e[i..].iter().map(|v| v * v).sum::<f64>();
        }
        total
    }
}

/// `Tr(M⁻¹)` for a symmetric positive-definite `M`.
pub fn trace_of_inverse(m: &DenseMatrix) -> Result<f64> {
    Ok(cholesky(m)?.trace_of_inverse())
}
