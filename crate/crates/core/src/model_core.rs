//! Problem parameters, characteristic roots, constant-rate and refraction
//! value functions, and the optimal refraction threshold `b*(c̄)`.
//!
//! The surplus follows `X_t = x + μt + σW_t − ∫D_s ds` with dividend rates
//! `D_t ∈ [a·R_t, c̄]`, `R_t` being the running maximum of the rates paid.
//! For a constant rate `d` the generator is
//! `L^d W = σ²/2·W'' + (μ−d)·W' − qW + d`, whose homogeneous solutions are
//! `e^{θ₁(d)x}` and `e^{θ₂(d)x}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, exp_guarded, scan_sign_changes};

/// The problem instance `(μ, σ, q, a, c̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drift of the uncontrolled surplus (money/time, > 0).
    pub mu: f64,
    /// Volatility (money/√time, ≥ 0).
    pub sigma: f64,
    /// Discount rate (1/time, > 0).
    pub q: f64,
    /// Drawdown fraction, in the open interval (0, 1).
    pub a: f64,
    /// Maximum dividend rate (money/time, > 0).
    pub cbar: f64,
}

impl ModelParams {
    /// Validates and builds a parameter set.
    pub fn new(mu: f64, sigma: f64, q: f64, a: f64, cbar: f64) -> Result<Self> {
        let p = ModelParams {
            mu,
            sigma,
            q,
            a,
            cbar,
        };
        p.validate()?;
        Ok(p)
    }

    /// The reference instance `μ = 4, σ = 2, q = 0.1` with the given `a`, `c̄`.
    pub fn reference(a: f64, cbar: f64) -> Self {
        ModelParams {
            mu: 4.0,
            sigma: 2.0,
            q: 0.1,
            a,
            cbar,
        }
    }

    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, constraint| Err(Error::InvalidParams { name, value, constraint });
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu", self.mu, "must be finite and > 0");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", self.sigma, "must be finite and >= 0");
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("q", self.q, "must be finite and > 0");
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad("a", self.a, "must lie in the open interval (0, 1)");
        }
        if !(self.cbar > 0.0 && self.cbar.is_finite()) {
            return bad("cbar", self.cbar, "must be finite and > 0");
        }
        Ok(())
    }

    /// Same instance with a different rate ceiling.
    pub fn with_cbar(&self, cbar: f64) -> Self {
        ModelParams { cbar, ..*self }
    }

    /// Same instance with a different drawdown fraction.
    pub fn with_a(&self, a: f64) -> Self {
        ModelParams { a, ..*self }
    }

    /// The ceiling `qσ²/(2μ)` at or below which paying `c̄` forever is optimal.
    pub fn regime_threshold(&self) -> f64 {
        self.q * self.sigma * self.sigma / (2.0 * self.mu)
    }

    /// True when `c̄ > qσ²/(2μ)`, the regime in which the two-curve machinery applies.
    pub fn interesting_regime(&self) -> bool {
        self.cbar > self.regime_threshold()
    }

    pub(crate) fn require_diffusion(&self) -> Result<()> {
        if self.sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::DegenerateDiffusion)
        }
    }

    pub(crate) fn require_interesting(&self) -> Result<()> {
        self.require_diffusion()?;
        if self.interesting_regime() {
            Ok(())
        } else {
            Err(Error::RegimeError(format!(
                "cbar = {} <= q·sigma²/(2·mu) = {}: paying the ceiling forever is optimal",
                self.cbar,
                self.regime_threshold()
            )))
        }
    }

    /// Canonical `key=value` text (one key per line).
    pub fn to_text(&self) -> String {
        format!(
            "mu={:?}\nsigma={:?}\nq={:?}\na={:?}\ncbar={:?}\n",
            self.mu, self.sigma, self.q, self.a, self.cbar
        )
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu={} sigma={} q={} a={} cbar={}",
            self.mu, self.sigma, self.q, self.a, self.cbar
        )
    }
}

/// Parses the canonical `key=value` form. Blank lines and `#` comments are
/// ignored; unknown or duplicated keys and missing keys are errors.
impl FromStr for ModelParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 5] = [None; 5];
        const KEYS: [&str; 5] = ["mu", "sigma", "q", "a", "cbar"];
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got `{}`", lineno + 1, raw)))?;
            let k = k.trim();
            let idx = KEYS
                .iter()
                .position(|key| *key == k)
                .ok_or_else(|| Error::Parse(format!("line {}: unknown key `{}`", lineno + 1, k)))?;
            if vals[idx].is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{}`", lineno + 1, k)));
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{}` is not a number", lineno + 1, v.trim())))?;
            vals[idx] = Some(v);
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Parse(format!("missing key `{}`", KEYS[i])));
        ModelParams::new(get(0)?, get(1)?, get(2)?, get(3)?, get(4)?)
    }
}

/// Roots `θ₁(d) > 0 > θ₂(d)` of `σ²/2·θ² + (μ−d)·θ − q = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub theta1: f64,
    pub theta2: f64,
    /// The dividend rate the roots belong to.
    pub d: f64,
}

/// Roots and their derivatives with respect to the rate, for internal use.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Roots {
    pub t1: f64,
    pub t2: f64,
    pub dt1: f64,
    pub dt2: f64,
}

/// Stable root computation shared by every module (`σ > 0` assumed).
#[inline]
pub(crate) fn roots(d: f64, mu: f64, sigma: f64, q: f64) -> Roots {
    let s2 = sigma * sigma;
    let k = d - mu;
    let disc = (k * k + 2.0 * q * s2).sqrt();
    let prod = -2.0 * q / s2;
    let (t1, t2) = if k >= 0.0 {
        let t1 = (k + disc) / s2;
        (t1, prod / t1)
    } else {
        let t2 = (k - disc) / s2;
        (prod / t2, t2)
    };
    let r = k / disc;
    Roots {
        t1,
        t2,
        dt1: (1.0 + r) / s2,
        dt2: (1.0 - r) / s2,
    }
}

#[inline]
pub(crate) fn roots_p(d: f64, p: &ModelParams) -> Roots {
    roots(d, p.mu, p.sigma, p.q)
}

/// Characteristic roots of `L^d` in the cancellation-free form.
pub fn characteristic_roots(d: f64, p: &ModelParams) -> Result<RootPair> {
    p.require_diffusion()?;
    let r = roots_p(d, p);
    Ok(RootPair {
        theta1: r.t1,
        theta2: r.t2,
        d,
    })
}

/// Derivatives `(θ₁'(d), θ₂'(d))` with respect to the rate.
pub fn root_derivatives(d: f64, p: &ModelParams) -> Result<(f64, f64)> {
    p.require_diffusion()?;
    let r = roots_p(d, p);
    Ok((r.dt1, r.dt2))
}

/// Value of paying the constant rate `d` until ruin: `(d/q)(1 − e^{θ₂(d)x})`.
pub fn constant_rate_value(x: f64, d: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    if x < 0.0 {
        return Err(Error::DomainError(format!("surplus x = {x} < 0")));
    }
    if d < 0.0 {
        return Err(Error::DomainError(format!("rate d = {d} < 0")));
    }
    let t2 = roots_p(d, p).t2;
    Ok(d / p.q * -(t2 * x).exp_m1())
}

/// Ingredients of the refraction value with rates `low` below the threshold
/// and `high` above it, in a form that never exponentiates a positive
/// multiple of `b`.
struct Refraction {
    s1: f64,
    s2: f64,
    t2: f64,
    low: f64,
    high: f64,
    q: f64,
    b: f64,
    /// Numerator of `B`, i.e. `q·B·den`.
    num: f64,
    /// `den·e^{−θ₁(low)b}` where `den = ∂ₓW₀(b) − θ₂(high)W₀(b)` up to the
    /// common factor `1/√((μ−low)²+2qσ²)`.
    den_scaled: f64,
}

impl Refraction {
    fn new(b: f64, low: f64, high: f64, p: &ModelParams) -> Self {
        let rl = roots_p(low, p);
        let rh = roots_p(high, p);
        let (s1, s2, t2) = (rl.t1, rl.t2, rh.t2);
        let num = (low * (s2 * b).exp() * (s2 - t2) - (high - low) * t2) / p.q;
        let den_scaled = (s1 - t2) - ((s2 - s1) * b).exp() * (s2 - t2);
        Refraction {
            s1,
            s2,
            t2,
            low,
            high,
            q: p.q,
            b,
            num,
            den_scaled,
        }
    }

    /// `B(c̄,b)·W₀(b)` (finite for every `b`).
    fn bw0_at_b(&self) -> f64 {
        self.num * -((self.s2 - self.s1) * self.b).exp_m1() / self.den_scaled
    }

    fn value(&self, x: f64) -> f64 {
        if x < self.b {
            let bw0 = self.num * ((self.s1 * (x - self.b)).exp() - (self.s2 * x - self.s1 * self.b).exp()) / self.den_scaled;
            bw0 + self.low / self.q * -(self.s2 * x).exp_m1()
        } else {
            let bracket = self.bw0_at_b() - self.low / self.q * (self.s2 * self.b).exp() - (self.high - self.low) / self.q;
            self.high / self.q + (self.t2 * (x - self.b)).exp() * bracket
        }
    }

    fn dx(&self, x: f64) -> f64 {
        if x < self.b {
            let d = self.num
                * (self.s1 * (self.s1 * (x - self.b)).exp() - self.s2 * (self.s2 * x - self.s1 * self.b).exp())
                / self.den_scaled;
            d - self.low / self.q * self.s2 * (self.s2 * x).exp()
        } else {
            let bracket = self.bw0_at_b() - self.low / self.q * (self.s2 * self.b).exp() - (self.high - self.low) / self.q;
            self.t2 * (self.t2 * (x - self.b)).exp() * bracket
        }
    }
}

fn check_refraction_domain(x: f64, b: f64, p: &ModelParams) -> Result<()> {
    p.require_diffusion()?;
    if x < 0.0 {
        return Err(Error::DomainError(format!("surplus x = {x} < 0")));
    }
    if b < 0.0 {
        return Err(Error::DomainError(format!("threshold b = {b} < 0")));
    }
    Ok(())
}

/// Value `v(x, c̄, b)` of the refraction strategy paying `a·c̄` below `b` and
/// `c̄` above it.
pub fn refraction_value(x: f64, b: f64, p: &ModelParams) -> Result<f64> {
    refraction_value_rates(x, b, p.a * p.cbar, p.cbar, p)
}

/// Refraction value with explicit low and high rates (`0 ≤ low < high`).
///
/// With `low = 0` this is the unconstrained threshold strategy.
pub fn refraction_value_rates(x: f64, b: f64, low: f64, high: f64, p: &ModelParams) -> Result<f64> {
    check_refraction_domain(x, b, p)?;
    Ok(Refraction::new(b, low, high, p).value(x))
}

/// `∂ₓv(x, c̄, b)`; at `x = b` the right branch is used.
pub fn refraction_value_dx(x: f64, b: f64, p: &ModelParams) -> Result<f64> {
    check_refraction_domain(x, b, p)?;
    Ok(Refraction::new(b, p.a * p.cbar, p.cbar, p).dx(x))
}

/// The coefficient `B(c̄, b)` of the refraction value (guarded against overflow).
pub fn refraction_coefficient_b(b: f64, p: &ModelParams) -> Result<f64> {
    check_refraction_domain(0.0, b, p)?;
    let r = Refraction::new(b, p.a * p.cbar, p.cbar, p);
    let low_disc = (p.mu - p.a * p.cbar).hypot((2.0 * p.q).sqrt() * p.sigma);
    // B = num / den with den = den_scaled·e^{θ₁(ac̄)b}/√(…)
    Ok(r.num * low_disc / r.den_scaled * exp_guarded(-r.s1 * b)?)
}

/// `E(c̄, b)·e^{−θ₁(ac̄)b}`, the sign-carrying factor of `∂_b B(c̄, b)`.
pub fn threshold_equation_scaled(b: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    let rl = roots_p(p.a * p.cbar, p);
    let (s1, s2) = (rl.t1, rl.t2);
    let t2 = roots_p(p.cbar, p).t2;
    let a = p.a;
    Ok((a - 1.0) * t2 * (t2 - s1) * s1
        + ((s2 - s1) * b).exp() * (1.0 - a) * t2 * (t2 - s2) * s2
        + (s2 * b).exp() * a * (t2 - s2) * (t2 - s1) * (s2 - s1))
}

/// Initial bracket factor for `b*`: `[0, 10·μ/q]`.
const BSTAR_BRACKET_FACTOR: f64 = 10.0;

/// Optimal refraction threshold `b*(c̄)`.
///
/// Returns 0 when `c̄ ≤ qσ²/(2μ)`; otherwise the unique positive root of the
/// scaled threshold equation, bracketed on `[0, 10μ/q]` (doubled up to four
/// times) and refined by bisection to `1e-10`.
pub fn optimal_refraction_threshold(p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    if !p.interesting_regime() {
        return Ok(0.0);
    }
    let f = |b: f64| threshold_equation_scaled(b, p);
    let f0 = f(0.0)?;
    let mut hi = BSTAR_BRACKET_FACTOR * p.mu / p.q;
    let mut f_hi = f(hi)?;
    let mut doublings = 0;
    while f_hi.signum() == f0.signum() && doublings < 4 {
        hi *= 2.0;
        f_hi = f(hi)?;
        doublings += 1;
    }
    if f_hi.signum() == f0.signum() {
        return Err(Error::BracketError {
            lo: 0.0,
            hi,
            f_lo: f0,
            f_hi,
        });
    }
    bisect(f, 0.0, hi, 1e-10)
}

/// Number of sign changes of the threshold equation on a dense grid of `(0, hi]`.
pub fn threshold_equation_sign_changes(p: &ModelParams, hi: f64, n: usize) -> Result<usize> {
    Ok(scan_sign_changes(|b| threshold_equation_scaled(b, p), 0.0, hi, n)?.changes.len())
}
