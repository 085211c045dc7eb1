//! Robust dynamic programming against entropy-regularized adversaries.
//!
//! The adversary picks a disturbance distribution that maximizes the
//! expected cost minus `gamma_h` times its cross-entropy to an empirical
//! distribution plus `gamma_e` times its own entropy. The inner problem has
//! a softmax solution, which turns the robust recursion into a min over
//! inputs of a log-sum-exp ("minsoftmax").
//!
//! - [`finite`]: value iteration on finite spaces and the classical limit regimes.
//! - [`lq`]: linear dynamics, quadratic cost and Gaussian empirical noise.
//! - [`oracle`]: brute-force and quadrature verifiers.
//! - [`montecarlo`]: rollouts and trajectory statistics.
//! - [`scenarios`]: scenario files and bundled example systems.

// Negated comparisons in this crate are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod columnar;
pub mod error;
pub mod finite;
pub mod lq;
pub mod model;
pub mod montecarlo;
pub mod oracle;
pub mod rng;
pub mod scenarios;
pub mod verify;

pub use error::{Error, Result, ValidationReport, Violation};
pub use finite::{solve_backward, solve_limit, AlphaRow, LimitRegime};
pub use model::{
    AdversaryRow, AdversaryTable, AffineMap, Empirical, EmpiricalLayout, EmpiricalTable, FiniteSystem, FiniteSystemParts,
    Horizon, LqSystem, Penalties, SolveResult,
};
