//! Optimal dividend strategies for a drifted Brownian surplus under a
//! drawdown constraint on the dividend rate.
//!
//! The crate is organised bottom-up:
//!
//! * [`model_core`] — parameters, characteristic roots, constant-rate and
//!   refraction values, the optimal refraction threshold `b*(c̄)`;
//! * [`closed_forms`] — the closed-form building blocks of the two-curve value
//!   function and the variational coefficients of the curve ODE;
//! * [`boundary_asymptotics`] — the boundary values `z*(c̄)`, `x*(c̄)` and the
//!   large-`c̄` expansions;
//! * [`curve_solver`] — backward integration of the free-boundary curves
//!   `γ(c) ≤ ζ(c)` and of the coefficient `A(c)`;
//! * [`value_surface`] — evaluation of `W(x,c)`, its partials and the policy;
//! * [`verifier`] — HJB supersolution and marginal-value checks;
//! * [`simulator`] — seeded Monte Carlo evaluation of any admissible strategy;
//! * [`deterministic`] — the `σ = 0` closed forms.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary_asymptotics;
pub mod closed_forms;
pub mod curve_solver;
pub mod deterministic;
pub mod error;
pub mod model_core;
pub mod numerics;
pub mod simulator;
pub mod value_surface;
pub mod verifier;

pub use error::{Error, Result};
pub use model_core::{ModelParams, RootPair};
