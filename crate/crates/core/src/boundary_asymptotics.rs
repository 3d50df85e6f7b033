//! Boundary values of the free-boundary problem at the rate ceiling —
//! `z*(c̄)` and `x*(c̄)` — together with their large-`c̄` expansions and the
//! unconstrained (`a = 0`) refraction threshold.

use serde::{Deserialize, Serialize};

use crate::closed_forms::c0_reduced;
use crate::error::{Error, Result};
use crate::model_core::{optimal_refraction_threshold, refraction_value, roots_p, ModelParams};
use crate::numerics::{bisect, scan_sign_changes, SignScan};

/// Boundary values belonging to one rate ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    /// Optimal refraction threshold `b*(c̄)`.
    pub bstar: f64,
    /// Zero of `C₀(b*, ·, c̄)`.
    pub zstar: f64,
    /// Zero of `∂_{c̄}V^{c̄}(·)`, when it exists.
    pub xstar: Option<f64>,
    pub cbar: f64,
}

/// Number of scan points for `z*`.
pub const ZSTAR_SCAN_POINTS: usize = 10_000;
/// Number of scan points for `x*`.
pub const XSTAR_SCAN_POINTS: usize = 3_000;

/// Sign of the reduced `C₀(b*, z, c̄)`.
fn zstar_function(bstar: f64, z: f64, p: &ModelParams) -> Result<f64> {
    Ok(c0_reduced(bstar, z, p.cbar, p)?.value.signum())
}

/// Zero `z*(c̄)` of `C₀(b*(c̄), ·, c̄)` on `(b*, b* + 10μ/q]`.
///
/// The scan uses `C₀` with its `e^{2θ₁(c̄)(z−b*)}` numerator channel removed
/// (see [`crate::closed_forms::c0_reduced`]); that channel vanishes exactly at
/// `y = b*`, so the zero is unchanged, but the remainder stays resolvable in
/// double precision for very large `c̄`. Exactly one sign change is required.
pub fn solve_zstar(p: &ModelParams) -> Result<f64> {
    p.require_interesting()?;
    let bstar = optimal_refraction_threshold(p)?;
    solve_zstar_with_bstar(bstar, p)
}

/// [`solve_zstar`] with a precomputed `b*`.
pub fn solve_zstar_with_bstar(bstar: f64, p: &ModelParams) -> Result<f64> {
    let lo = bstar;
    let hi = bstar + 10.0 * p.mu / p.q;
    let scan = scan_sign_changes(|z| zstar_function(bstar, z, p), lo, hi, ZSTAR_SCAN_POINTS)?;
    let (a, b) = single_bracket(&scan, "C0(b*, z, cbar)", lo, hi)?;
    bisect(|z| zstar_function(bstar, z, p), a, b, 1e-9)
}

fn single_bracket(scan: &SignScan, what: &'static str, lo: f64, hi: f64) -> Result<(f64, f64)> {
    match scan.changes.len() {
        0 => Err(Error::NoSignChange {
            what,
            lo,
            hi,
            points: scan.grid.len(),
        }),
        1 => Ok(scan.bracket(0)),
        n => Err(Error::MultipleSignChanges {
            what,
            count: n,
            locations: scan.locations(),
        }),
    }
}

/// `∂_{c̄}V^{c̄}(x)` by a symmetric difference with `b*` re-optimised on each side.
pub fn dv_dcbar(x: f64, p: &ModelParams) -> Result<f64> {
    let h = 1e-4 * p.cbar;
    let up = p.with_cbar(p.cbar + h);
    let dn = p.with_cbar(p.cbar - h);
    let vu = refraction_value(x, optimal_refraction_threshold(&up)?, &up)?;
    let vd = refraction_value(x, optimal_refraction_threshold(&dn)?, &dn)?;
    Ok((vu - vd) / (2.0 * h))
}

/// Result of the `x*` search, with the scan evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct XstarSearch {
    pub xstar: Option<f64>,
    /// Scan abscissae and the corresponding `∂_{c̄}V` values.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of sign changes seen.
    pub sign_changes: usize,
}

/// Zero `x*(c̄)` of `∂_{c̄}V^{c̄}`, or `None` when the scan over
/// `(0, 1.5·z*]` does not show exactly one `−` to `+` sign change.
pub fn solve_xstar(p: &ModelParams) -> Result<Option<f64>> {
    Ok(search_xstar(p, solve_zstar(p)?)?.xstar)
}

/// Full `x*` search given `z*`.
pub fn search_xstar(p: &ModelParams, zstar: f64) -> Result<XstarSearch> {
    p.require_interesting()?;
    let hi = 1.5 * zstar;
    let scan = scan_sign_changes(|x| dv_dcbar(x, p), 0.0, hi, XSTAR_SCAN_POINTS)?;
    let mut out = XstarSearch {
        xstar: None,
        sign_changes: scan.changes.len(),
        grid: scan.grid.clone(),
        values: scan.values.clone(),
    };
    if scan.changes.len() == 1 {
        let i = scan.changes[0];
        let (a, b) = scan.bracket(0);
        // only a − to + change qualifies
        let rising = scan.values[i] < 0.0;
        if rising {
            out.xstar = Some(bisect(|x| dv_dcbar(x, p), a, b, 1e-7)?);
        }
    }
    Ok(out)
}

/// All boundary values for one instance.
pub fn boundary_values(p: &ModelParams) -> Result<BoundaryValues> {
    let bstar = optimal_refraction_threshold(p)?;
    let zstar = solve_zstar_with_bstar(bstar, p)?;
    let xstar = search_xstar(p, zstar)?.xstar;
    Ok(BoundaryValues {
        bstar,
        zstar,
        xstar,
        cbar: p.cbar,
    })
}

/// First-order large-`c̄` predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPredictions {
    pub bstar_pred: f64,
    pub zstar_pred: f64,
    pub xstar_pred: f64,
    /// Common limit `(μ/q)(1 + 1/√a)` of `z*` and `x*`.
    pub limit: f64,
    /// Coefficients of `1/c̄` in the three expansions.
    pub bstar_coef: f64,
    pub zstar_coef: f64,
    pub xstar_coef: f64,
}

/// The `c̄ → ∞` limit `(μ/q)(1 + 1/√a)` of `z*(c̄)` and `x*(c̄)`.
pub fn zstar_limit(p: &ModelParams) -> f64 {
    p.mu / p.q * (1.0 + 1.0 / p.a.sqrt())
}

/// Expansions `b* ≈ μ/q − (μ²+aqσ²)/(2aq)/c̄`,
/// `z* ≈ L + ((1−2√a−3a)μ² − 3(1+a^{3/2}/2)qσ²)/(3q a^{3/2})/c̄` and
/// `x* ≈ L + ((1−2√a−3a)μ² − 3(1+a^{3/2})qσ²)/(3q a^{3/2})/c̄`.
pub fn asymptotic_predictions(p: &ModelParams) -> AsymptoticPredictions {
    let (mu, q, a, s2) = (p.mu, p.q, p.a, p.sigma * p.sigma);
    let ra = a.sqrt();
    let a32 = a * ra;
    let limit = zstar_limit(p);
    let bstar_coef = -(mu * mu + a * q * s2) / (2.0 * a * q);
    let base = (1.0 - 2.0 * ra - 3.0 * a) * mu * mu;
    let zstar_coef = (base - 3.0 * (1.0 + a32 / 2.0) * q * s2) / (3.0 * q * a32);
    let xstar_coef = (base - 3.0 * (1.0 + a32) * q * s2) / (3.0 * q * a32);
    AsymptoticPredictions {
        bstar_pred: mu / q + bstar_coef / p.cbar,
        zstar_pred: limit + zstar_coef / p.cbar,
        xstar_pred: limit + xstar_coef / p.cbar,
        limit,
        bstar_coef,
        zstar_coef,
        xstar_coef,
    }
}

/// Optimal threshold of the unconstrained (`a = 0`) bounded-rate problem:
/// `ln[θ₂(0)(θ₂(0)−θ₂(c̄)) / (θ₁(0)(θ₁(0)−θ₂(c̄)))] / (θ₁(0)−θ₂(0))`.
pub fn unconstrained_threshold(p: &ModelParams) -> Result<f64> {
    p.require_interesting()?;
    let r0 = roots_p(0.0, p);
    let t2c = roots_p(p.cbar, p).t2;
    let ratio = r0.t2 * (r0.t2 - t2c) / (r0.t1 * (r0.t1 - t2c));
    if !(ratio > 1.0) {
        return Err(Error::RegimeError(format!(
            "unconstrained threshold log-argument {ratio} <= 1"
        )));
    }
    Ok(ratio.ln() / (r0.t1 - r0.t2))
}

/// Smallest `c̄` in `[lo, hi]` (to within `tol`) at which `x*(c̄)` exists,
/// found by bisection on the existence predicate.
pub fn xstar_onset(p: &ModelParams, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let exists = |c: f64| -> Result<bool> { Ok(solve_xstar(&p.with_cbar(c))?.is_some()) };
    if exists(lo)? {
        return Err(Error::RegimeError(format!("x* already exists at the lower end c̄ = {lo}")));
    }
    if !exists(hi)? {
        return Err(Error::RegimeError(format!("x* does not exist at the upper end c̄ = {hi}")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if exists(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(0.5 * (a + b))
}
