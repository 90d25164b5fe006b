//! Relaxed A-optimal experimental design with the left preconditioner
//! `h(z) = −z⁻²`, solved by a quasi-Newton SQP method with active-set QP
//! subproblems.
//!
//! The crate is organized bottom-up:
//!
//! - [`dense`]: column-major matrices, Cholesky, trace of the inverse,
//!   random design matrices with prescribed conditioning.
//! - [`criterion`]: the A-criterion `Tr(M(w, q)⁻¹)`, its preconditioned form
//!   and analytic derivatives.
//! - [`qp`]: primal active-set solver for convex QPs with one equality and
//!   simple bounds.
//! - [`sqp`]: damped-BFGS SQP driver with an augmented Lagrangian line search.
//! - [`model_problem`]: the two-weight model problem, its closed-form
//!   condition numbers and an empirical estimator.
//! - [`fhn`]: FitzHugh-Nagumo dynamics with forward sensitivities, used as a
//!   nonlinear design problem with controls.
//! - [`experiments`]: the prior-information sweep, the problem-size sweep, the
//!   FitzHugh-Nagumo design study and the model-problem sweep.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod criterion;
pub mod dense;
pub mod error;
pub mod experiments;
pub mod fhn;
pub mod model_problem;
pub mod qp;
pub mod sqp;

pub use error::{Error, Result};
