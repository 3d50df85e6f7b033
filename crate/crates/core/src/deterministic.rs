//! The `σ = 0` model `X_t = x + μt`: value of the refracted drawdown payout
//! (pay `c̄` down to `b`, then `a·c̄`), its optimal switch level, and the level
//! above which taking the whole surplus at once is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect;

/// Parameters of the deterministic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetParams {
    pub mu: f64,
    pub q: f64,
    pub a: f64,
    pub cbar: f64,
}

impl DetParams {
    /// Validated constructor: `μ > 0`, `q > 0`, `a ∈ (0,1)`, `c̄ > μ`.
    pub fn new(mu: f64, q: f64, a: f64, cbar: f64) -> Result<Self> {
        let p = DetParams { mu, q, a, cbar };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, constraint| Err(Error::InvalidParams { name, value, constraint });
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", self.mu, "must be finite and > 0");
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("q", self.q, "must be finite and > 0");
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad("a", self.a, "must lie in (0, 1)");
        }
        if !(self.cbar > self.mu && self.cbar.is_finite()) {
            return bad("cbar", self.cbar, "must be finite and > mu");
        }
        Ok(())
    }

    pub fn with_cbar(&self, cbar: f64) -> Self {
        DetParams { cbar, ..*self }
    }
}

/// `(r/q)(1 − e^{−qT})` with `T` possibly infinite.
fn annuity(rate: f64, q: f64, t: f64) -> f64 {
    if t.is_infinite() {
        rate / q
    } else {
        -rate / q * (-q * t).exp_m1()
    }
}

/// Value of paying `c̄` until the surplus falls to `b` (after
/// `(x−b)/(c̄−μ)`) and `a·c̄` afterwards. If `a·c̄ ≤ μ` the second phase
/// never ruins and pays `a·c̄/q` forever.
pub fn det_refraction_value(x: f64, b: f64, dp: &DetParams) -> Result<f64> {
    dp.validate()?;
    if !(b >= 0.0) || !(x >= b) || !x.is_finite() {
        return Err(Error::DomainError(format!("need x >= b >= 0, got x = {x}, b = {b}")));
    }
    let t1 = (x - b) / (dp.cbar - dp.mu);
    let low = dp.a * dp.cbar;
    let t2 = if low > dp.mu { b / (low - dp.mu) } else { f64::INFINITY };
    // with b = 0 the second phase lasts no time even when it would be perpetual
    let second = if b == 0.0 { 0.0 } else { annuity(low, dp.q, t2) };
    Ok(annuity(dp.cbar, dp.q, t1) + (-dp.q * t1).exp() * second)
}

/// Optimal switch level `((a·c̄−μ)/q)·ln(a·c̄/(a·c̄−μ))`.
pub fn det_optimal_b(dp: &DetParams) -> Result<f64> {
    dp.validate()?;
    let k = dp.a * dp.cbar - dp.mu;
    if !(k > 0.0) {
        return Err(Error::RegimeError(format!(
            "a*cbar = {} <= mu = {}: the reduced phase never ruins",
            dp.a * dp.cbar,
            dp.mu
        )));
    }
    // ln(ac̄/(ac̄−μ)) = −ln(1 − μ/(ac̄))
    Ok(-k / dp.q * (-dp.mu / (dp.a * dp.cbar)).ln_1p())
}

/// Indifference level `(μ/q)(1 + 1/√a)`: the limit as `c̄ → ∞` of the surplus
/// above which paying everything at once beats the optimal refraction.
pub fn det_indifference_x(dp: &DetParams) -> f64 {
    dp.mu / dp.q * (1.0 + 1.0 / dp.a.sqrt())
}

/// `(2axqμ − ax²q² + μ²(1−a))/(2aq)`: the `1/c̄` coefficient of
/// `det_refraction_value(x, b*) − x`.
pub fn det_lower_order_coefficient(x: f64, dp: &DetParams) -> f64 {
    let (mu, q, a) = (dp.mu, dp.q, dp.a);
    (2.0 * a * x * q * mu - a * x * x * q * q + mu * mu * (1.0 - a)) / (2.0 * a * q)
}

/// `(1 − 2√a − 3a)μ²/(3a^{3/2}q)`: the `1/c̄` coefficient of the deterministic
/// `x*(c̄)`, the zero of `∂_{c̄}` of the optimal refraction value; positive for
/// `a < 1/9`, negative for `a > 1/9`.
///
/// The lump-sum indifference level ([`det_indifference_root`]) shares the
/// limit but carries half this coefficient: with
/// `V = x + N(x)/(2aqc̄) + M(x)/(6a²qc̄²) + …`, `V = x` balances `N` against
/// `M/(3ac̄)` while `∂_{c̄}V = 0` balances it against `2M/(3ac̄)`.
pub fn det_xstar_coefficient(dp: &DetParams) -> f64 {
    let ra = dp.a.sqrt();
    (1.0 - 2.0 * ra - 3.0 * dp.a) * dp.mu * dp.mu / (3.0 * dp.a * ra * dp.q)
}

/// `∂_{c̄}` of `det_refraction_value(x, b*(c̄))`. By the envelope theorem the
/// dependence through `b*` drops out, leaving the partial at fixed `b`.
pub fn det_value_dcbar(x: f64, dp: &DetParams) -> Result<f64> {
    let b = det_optimal_b(dp)?;
    if !(x >= b) {
        return Err(Error::DomainError(format!("need x >= b* = {b}, got x = {x}")));
    }
    let (mu, q, a, c) = (dp.mu, dp.q, dp.a, dp.cbar);
    let (k1, k2) = (c - mu, a * c - mu);
    let e1 = (-q * (x - b) / k1).exp();
    let e2 = (-q * b / k2).exp();
    let de1 = e1 * q * (x - b) / (k1 * k1);
    let de2 = e2 * q * b * a / (k2 * k2);
    let low = a * c / q * (1.0 - e2);
    Ok((1.0 - e1) / q - c / q * de1 + de1 * low + e1 * (a / q * (1.0 - e2) - a * c / q * de2))
}

/// Deterministic `x*(c̄)`: the zero of [`det_value_dcbar`] near the limit
/// `(μ/q)(1 + 1/√a)`.
pub fn det_xstar(dp: &DetParams) -> Result<f64> {
    let b = det_optimal_b(dp)?;
    let lim = det_indifference_x(dp);
    bisect(|x| det_value_dcbar(x, dp), b.max(0.5 * lim), 2.0 * lim, 1e-12 * lim)
}

/// Finite-`c̄` indifference level: the zero of
/// `det_refraction_value(x, b*) − x`, bracketed around the limit.
pub fn det_indifference_root(dp: &DetParams) -> Result<f64> {
    let b = det_optimal_b(dp)?;
    let lim = det_indifference_x(dp);
    let f = |x: f64| -> Result<f64> { Ok(det_refraction_value(x, b, dp)? - x) };
    let lo = b.max(0.5 * lim);
    bisect(f, lo, 2.0 * lim, 1e-12 * lim)
}
