//! Dense real linear algebra: column-major matrices, Cholesky factorization,
//! trace of the inverse, seeded random design matrices and finite differences.

mod cholesky;
mod diff;
mod matrix;
mod random;

pub(crate) use cholesky::factor_lower;
pub use cholesky::{cholesky, gram_cholesky, trace_of_inverse, CholeskyFactor, SYMMETRY_TOLERANCE};
pub use diff::{finite_difference_gradient, second_difference};
pub use matrix::{dot, norm2, norm_inf, DenseMatrix};
pub use random::{random_design_matrix, singular_value_profile, RngStream};
