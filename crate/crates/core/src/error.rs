//! Error type shared by every module of the solver.

use thiserror::Error;

/// Failure modes of the solver.
///
/// Every variant carries enough context to diagnose the failing instance
/// without re-running it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Parameters violate the model invariants.
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParams {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// A query lies outside the domain of the operation.
    #[error("domain error: {0}")]
    DomainError(String),

    /// The diffusion coefficient is zero; use the deterministic module.
    #[error("sigma = 0: the diffusive formulas do not apply (use the deterministic module)")]
    DegenerateDiffusion,

    /// An exponent exceeded the overflow guard.
    #[error("exponent {argument} exceeds the overflow guard of {limit}")]
    OverflowGuard { argument: f64, limit: f64 },

    /// A root could not be bracketed.
    #[error("root not bracketed on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    BracketError {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// A scan found no sign change where exactly one was expected.
    #[error("no sign change of {what} on [{lo}, {hi}] ({points} points scanned)")]
    NoSignChange {
        what: &'static str,
        lo: f64,
        hi: f64,
        points: usize,
    },

    /// A scan found several sign changes where exactly one was expected.
    #[error("{count} sign changes of {what}, first at {locations:?}")]
    MultipleSignChanges {
        what: &'static str,
        count: usize,
        locations: Vec<f64>,
    },

    /// Richardson extrapolation did not settle.
    #[error("finite-difference step collapse at {at}: relative disagreement {disagreement:e}")]
    StepCollapse { at: f64, disagreement: f64 },

    /// A coefficient of the curve ODE vanished or changed sign.
    #[error("singular coefficient {which} at c = {c} (value {value:e})")]
    SingularCoefficient {
        which: &'static str,
        c: f64,
        value: f64,
    },

    /// The Newton projection onto the constraint manifold failed.
    #[error("constraint projection diverged at c = {c}: {detail}")]
    ConstraintDrift { c: f64, detail: String },

    /// A value-surface query below a truncated curve grid.
    #[error("query at c = {c} lies below the truncated grid (valid from c = {c_trunc})")]
    QueryBelowTruncation { c: f64, c_trunc: f64 },

    /// A simulated strategy emitted a rate outside the admissible band.
    #[error("inadmissible rate {rate} (admissible band [{lo}, {hi}])")]
    InadmissibleRate { rate: f64, lo: f64, hi: f64 },

    /// The parameters are outside the regime where the formula is valid.
    #[error("regime error: {0}")]
    RegimeError(String),

    /// A data structure violates its documented invariant.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Malformed textual input.
    #[error("parse error: {0}")]
    Parse(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
