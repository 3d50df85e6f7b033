//! Closed-form building blocks of the two-curve value function: the
//! denominator `d`, the coefficients `b₀₀, b₀₁, b₁₀, b₁₁`, the assembled
//! `b₀, b₁`, the basis functions `f₁₀, f₁₁, f₂₀, f₂₁` and the variational
//! coefficients `C₀, C₁₀, C₁₁, C₂₀, C₂₁, C₂₂`.
//!
//! # Representation
//!
//! With `u = z − y`, every `z`-dependent formula is an exponential polynomial
//!
//! ```text
//!   Σ_k coef_k · u^{p_k} · e^{y·σ_k} · e^{u·ρ_k},   ρ_k ∈ {0, θ₁(c), θ₂(c)},
//! ```
//!
//! where `σ_k` is a combination of `θ₁(ac)` and `θ₂(ac)`. The formulas are
//! stored term by term exactly as printed (each product is expanded, never
//! simplified) and summed per *channel* `ρ ∈ {0, θ₁, θ₂}` in log-scaled
//! arithmetic, so nothing overflows even when `θ₁(c)·(z−y)` is in the
//! thousands. Derivatives in `z` are exact (term-wise differentiation);
//! derivatives in `y` and `c` use Richardson-extrapolated central differences.
//!
//! The channel split also exposes the `e^{2θ₁(c)u}` component of the
//! numerator of `C₀`. That component is a constant multiple `K(y,c)` which
//! vanishes identically at `y = b*(c)`; [`c0_reduced`] removes it so that the
//! exponentially small remainder that determines `z*(c̄)` can be resolved.

use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};
use crate::model_core::{roots_p, ModelParams};
use crate::numerics::{exp_guarded, richardson_derivative, Scaled};

/// Roots and root derivatives at the rates `c` and `a·c`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rates {
    pub c: f64,
    pub a: f64,
    pub q: f64,
    /// `θ₁(c), θ₂(c), θ₁'(c), θ₂'(c)`.
    pub t1: f64,
    pub t2: f64,
    pub dt1: f64,
    pub dt2: f64,
    /// `θ₁(ac), θ₂(ac), θ₁'(ac), θ₂'(ac)` (derivatives taken at the point `ac`).
    pub s1: f64,
    pub s2: f64,
    pub ds1: f64,
    pub ds2: f64,
}

impl Rates {
    pub fn new(c: f64, p: &ModelParams) -> Self {
        let rc = roots_p(c, p);
        let ra = roots_p(p.a * c, p);
        Rates {
            c,
            a: p.a,
            q: p.q,
            t1: rc.t1,
            t2: rc.t2,
            dt1: rc.dt1,
            dt2: rc.dt2,
            s1: ra.t1,
            s2: ra.t2,
            ds1: ra.dt1,
            ds2: ra.dt2,
        }
    }

    /// `θ₁(c) − θ₂(c)`.
    pub fn gap(&self) -> f64 {
        self.t1 - self.t2
    }

    fn channel_rates(&self) -> [f64; 3] {
        [0.0, self.t1, self.t2]
    }
}

/// Channel indices: constant, `e^{θ₁(c)u}`, `e^{θ₂(c)u}`.
const CH0: usize = 0;
const CH1: usize = 1;
const CH2: usize = 2;

/// One term `coef · u^upow · e^{ylog} · e^{ρ_chan·u}`.
#[derive(Debug, Clone, Copy)]
struct Term {
    coef: f64,
    ylog: f64,
    chan: usize,
    upow: u8,
}

/// A formula as a list of terms.
#[derive(Debug, Clone, Default)]
struct ExpSum {
    terms: Vec<Term>,
}

impl ExpSum {
    fn push(&mut self, coef: f64, ylog: f64, chan: usize, upow: u8) {
        self.terms.push(Term { coef, ylog, chan, upow });
    }
}

/// Value and first two `u`-derivatives of an [`ExpSum`], per channel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Channels {
    /// `v[order][channel]`.
    pub v: [[Scaled; 3]; 3],
}

impl Channels {
    pub fn total(&self, order: usize) -> Scaled {
        self.v[order][0].add(self.v[order][1]).add(self.v[order][2])
    }
}

fn eval_sum(sum: &ExpSum, rates: [f64; 3], u: f64) -> Channels {
    let mut out = Channels {
        v: [[Scaled::ZERO; 3]; 3],
    };
    for (ch, &rho) in rates.iter().enumerate() {
        let mut m = f64::NEG_INFINITY;
        for t in sum.terms.iter().filter(|t| t.chan == ch && t.coef != 0.0) {
            m = m.max(t.ylog + rho * u);
        }
        if m == f64::NEG_INFINITY {
            continue;
        }
        let mut acc = [0.0f64; 3];
        for t in sum.terms.iter().filter(|t| t.chan == ch && t.coef != 0.0) {
            let e = t.coef * (t.ylog + rho * u - m).exp();
            if t.upow == 0 {
                acc[0] += e;
                acc[1] += e * rho;
                acc[2] += e * rho * rho;
            } else {
                acc[0] += e * u;
                acc[1] += e * (1.0 + rho * u);
                acc[2] += e * (2.0 * rho + rho * rho * u);
            }
        }
        for (order, a) in acc.iter().enumerate() {
            out.v[order][ch] = Scaled::new(*a, m);
        }
    }
    out
}

/// Denominator `d(y, z, c)` as printed (six products, expanded).
fn d_terms(y: f64, r: &Rates) -> ExpSum {
    let (y1, y2) = (y * r.s1, y * r.s2);
    let mut s = ExpSum::default();
    // e^{yθ₂(ac)+(z−y)θ₁(c)} θ₂(c)
    s.push(r.t2, y2, CH1, 0);
    // − e^{(z−y)θ₁(c)+yθ₁(ac)} θ₂(c)
    s.push(-r.t2, y1, CH1, 0);
    // + e^{(z−y)θ₂(c)+yθ₂(ac)} θ₂(ac)
    s.push(r.s2, y2, CH2, 0);
    // − e^{yθ₂(ac)+(z−y)θ₁(c)} θ₂(ac)
    s.push(-r.s2, y2, CH1, 0);
    // + e^{(z−y)θ₂(c)} (−e^{yθ₂(ac)} + e^{yθ₁(ac)}) θ₁(c)
    s.push(-r.t1, y2, CH2, 0);
    s.push(r.t1, y1, CH2, 0);
    // + e^{yθ₁(ac)} (−e^{(z−y)θ₂(c)} + e^{(z−y)θ₁(c)}) θ₁(ac)
    s.push(-r.s1, y1, CH2, 0);
    s.push(r.s1, y1, CH1, 0);
    s
}

/// `b₀₀(y, z, c)` as printed, one bullet per printed product.
fn b00_terms(y: f64, r: &Rates) -> ExpSum {
    let (a, c) = (r.a, r.c);
    let (t1, t2, dt1, dt2) = (r.t1, r.t2, r.dt1, r.dt2);
    let (s2, ds2) = (r.s2, r.ds2);
    let g = t1 - t2;
    let y2 = y * s2;
    let mut s = ExpSum::default();
    // a e^{(z−y)θ₂(c)+yθ₂(ac)} θ₂(ac)(θ₂(c)−θ₁(c))
    s.push(a * s2 * (t2 - t1), y2, CH2, 0);
    // − e^{(z−y)θ₁(c)} θ₂(c)(θ₁(c)−θ₂(c))
    s.push(-t2 * g, 0.0, CH1, 0);
    // − a e^{(z−y)θ₁(c)} (−1+e^{yθ₂(ac)}) θ₂(c)(θ₁(c)−θ₂(c))
    s.push(a * t2 * g, 0.0, CH1, 0);
    s.push(-a * t2 * g, y2, CH1, 0);
    // + a e^{yθ₂(ac)+(z−y)θ₁(c)} θ₂(ac)(θ₁(c)−θ₂(c))
    s.push(a * s2 * g, y2, CH1, 0);
    // + e^{(z−y)θ₂(c)} θ₁(c)(θ₁(c)−θ₂(c))
    s.push(t1 * g, 0.0, CH2, 0);
    // + a e^{(z−y)θ₂(c)} (−1+e^{yθ₂(ac)}) θ₁(c)(θ₁(c)−θ₂(c))
    s.push(-a * t1 * g, 0.0, CH2, 0);
    s.push(a * t1 * g, y2, CH2, 0);
    // − (θ₁(c)−θ₂(c))²
    s.push(-g * g, 0.0, CH0, 0);
    // − e^{(z−y)θ₁(c)} (c + ac(−1+e^{yθ₂(ac)})) (θ₁(c)−θ₂(c)) θ₂'(c)
    s.push(-(c - a * c) * g * dt2, 0.0, CH1, 0);
    s.push(-a * c * g * dt2, y2, CH1, 0);
    // + e^{(z−y)θ₂(c)} (z−y) (θ₁−θ₂)(−ac e^{yθ₂(ac)}θ₂(ac) + c(1+a(−1+e^{yθ₂(ac)}))θ₁(c)) θ₂'(c)
    s.push(g * dt2 * (-a * c * s2), y2, CH2, 1);
    s.push(g * dt2 * c * (1.0 - a) * t1, 0.0, CH2, 1);
    s.push(g * dt2 * c * a * t1, y2, CH2, 1);
    // + a²c e^{(z−y)θ₂(c)+yθ₂(ac)} (θ₂(c)−θ₁(c)) θ₂'(ac)
    s.push(a * a * c * (t2 - t1) * ds2, y2, CH2, 0);
    // + a²c e^{(z−y)θ₂(c)+yθ₂(ac)} y θ₂(ac)(θ₂(c)−θ₁(c)) θ₂'(ac)
    s.push(a * a * c * y * s2 * (t2 - t1) * ds2, y2, CH2, 0);
    // + a²c e^{yθ₂(ac)+(z−y)θ₁(c)} (θ₁(c)−θ₂(c)) θ₂'(ac)
    s.push(a * a * c * g * ds2, y2, CH1, 0);
    // − a²c e^{yθ₂(ac)+(z−y)θ₁(c)} y θ₂(c)(θ₁(c)−θ₂(c)) θ₂'(ac)
    s.push(-a * a * c * y * t2 * g * ds2, y2, CH1, 0);
    // + a²c e^{yθ₂(ac)+(z−y)θ₁(c)} y θ₂(ac)(θ₁(c)−θ₂(c)) θ₂'(ac)
    s.push(a * a * c * y * s2 * g * ds2, y2, CH1, 0);
    // + a²c e^{(z−y)θ₂(c)+yθ₂(ac)} y θ₁(c)(θ₁(c)−θ₂(c)) θ₂'(ac)
    s.push(a * a * c * y * t1 * g * ds2, y2, CH2, 0);
    // + e^{(z−y)θ₂(c)} (c + ac(−1+e^{yθ₂(ac)})) (θ₁(c)−θ₂(c)) θ₁'(c)
    s.push((c - a * c) * g * dt1, 0.0, CH2, 0);
    s.push(a * c * g * dt1, y2, CH2, 0);
    // + c e^{(z−y)θ₁(c)} (y−z) (θ₂(c) + a(−1+e^{yθ₂(ac)})θ₂(c) − a e^{yθ₂(ac)}θ₂(ac)) (θ₁−θ₂) θ₁'(c)
    s.push(-c * (1.0 - a) * t2 * g * dt1, 0.0, CH1, 1);
    s.push(-c * a * (t2 - s2) * g * dt1, y2, CH1, 1);
    // + e^{(z−y)θ₁(c)} (c(1+a(−1+e^{yθ₂(ac)}))θ₂(c) − ac e^{yθ₂(ac)}θ₂(ac)) (−θ₂'(c)+θ₁'(c))
    s.push(c * (1.0 - a) * t2 * (dt1 - dt2), 0.0, CH1, 0);
    s.push(a * c * (t2 - s2) * (dt1 - dt2), y2, CH1, 0);
    // + c e^{(z−y)θ₂(c)} (a e^{yθ₂(ac)}θ₂(ac) + (−1+a−a e^{yθ₂(ac)})θ₁(c)) (−θ₂'(c)+θ₁'(c))
    s.push(c * a * (s2 - t1) * (dt1 - dt2), y2, CH2, 0);
    s.push(c * (a - 1.0) * t1 * (dt1 - dt2), 0.0, CH2, 0);
    s
}

/// `b₁₀(y, z, c)` as printed, one bullet per printed product.
fn b10_terms(y: f64, r: &Rates) -> ExpSum {
    let a = r.a;
    let (t1, t2, dt1, dt2) = (r.t1, r.t2, r.dt1, r.dt2);
    let (s1, s2, ds1, ds2) = (r.s1, r.s2, r.ds1, r.ds2);
    let g = t1 - t2;
    let (y1, y2) = (y * s1, y * s2);
    let mut s = ExpSum::default();
    // e^{(z−y)θ₂(c)} (e^{yθ₁(ac)} − e^{yθ₂(ac)}) (−θ₁(c)+θ₂(c)) θ₁'(c)
    s.push(-g * dt1, y1, CH2, 0);
    s.push(g * dt1, y2, CH2, 0);
    // − e^{(z−y)θ₁(c)} (y−z) (θ₁−θ₂)(−e^{yθ₁(ac)}θ₁(ac) + (e^{yθ₁(ac)}−e^{yθ₂(ac)})θ₂(c) + e^{yθ₂(ac)}θ₂(ac)) θ₁'(c)
    s.push(g * dt1 * (t2 - s1), y1, CH1, 1);
    s.push(g * dt1 * (s2 - t2), y2, CH1, 1);
    // − a e^{(z−y)θ₁(c)+yθ₁(ac)} (θ₁−θ₂) θ₁'(ac)
    s.push(-a * g * ds1, y1, CH1, 0);
    // + a e^{yθ₁(ac)+(z−y)θ₂(c)} (θ₁−θ₂) θ₁'(ac)
    s.push(a * g * ds1, y1, CH2, 0);
    // − a e^{(z−y)θ₁(c)+yθ₁(ac)} y θ₁(ac)(θ₁−θ₂) θ₁'(ac)
    s.push(-a * y * s1 * g * ds1, y1, CH1, 0);
    // + a e^{yθ₁(ac)+(z−y)θ₂(c)} y θ₁(ac)(θ₁−θ₂) θ₁'(ac)
    s.push(a * y * s1 * g * ds1, y1, CH2, 0);
    // − e^{(z−y)θ₂(c)} ((−e^{yθ₁(ac)}+e^{yθ₂(ac)})θ₁(c) + e^{yθ₁(ac)}θ₁(ac) − e^{yθ₂(ac)}θ₂(ac)) (θ₁'(c)−θ₂'(c))
    s.push(-(s1 - t1) * (dt1 - dt2), y1, CH2, 0);
    s.push(-(t1 - s2) * (dt1 - dt2), y2, CH2, 0);
    // + e^{(z−y)θ₁(c)} (e^{yθ₁(ac)}θ₁(ac) + (−e^{yθ₁(ac)}+e^{yθ₂(ac)})θ₂(c) − e^{yθ₂(ac)}θ₂(ac)) (θ₁'(c)−θ₂'(c))
    s.push((s1 - t2) * (dt1 - dt2), y1, CH1, 0);
    s.push((t2 - s2) * (dt1 - dt2), y2, CH1, 0);
    // + e^{(z−y)θ₁(c)} (e^{yθ₁(ac)} − e^{yθ₂(ac)}) (θ₁−θ₂) θ₂'(c)
    s.push(g * dt2, y1, CH1, 0);
    s.push(-g * dt2, y2, CH1, 0);
    // + e^{(z−y)θ₂(c)} (z−y) (θ₁−θ₂) ((−e^{yθ₁(ac)}+e^{yθ₂(ac)})θ₁(c) + e^{yθ₁(ac)}θ₁(ac) − e^{yθ₂(ac)}θ₂(ac)) θ₂'(c)
    s.push(g * dt2 * (s1 - t1), y1, CH2, 1);
    s.push(g * dt2 * (t1 - s2), y2, CH2, 1);
    // + a e^{(z−y)θ₁(c)+yθ₂(ac)} (θ₁−θ₂) θ₂'(ac)
    s.push(a * g * ds2, y2, CH1, 0);
    // + a e^{(z−y)θ₂(c)+yθ₂(ac)} (−θ₁+θ₂) θ₂'(ac)
    s.push(-a * g * ds2, y2, CH2, 0);
    // + a e^{(z−y)θ₁(c)+yθ₂(ac)} y (θ₁−θ₂) θ₂(ac) θ₂'(ac)
    s.push(a * y * g * s2 * ds2, y2, CH1, 0);
    // + a e^{(z−y)θ₂(c)+yθ₂(ac)} y (−θ₁+θ₂) θ₂(ac) θ₂'(ac)
    s.push(-a * y * g * s2 * ds2, y2, CH2, 0);
    // − a e^{(z−y)θ₂(c)} y θ₁(c)(θ₁−θ₂)(e^{yθ₁(ac)}θ₁'(ac) − e^{yθ₂(ac)}θ₂'(ac))
    s.push(-a * y * t1 * g * ds1, y1, CH2, 0);
    s.push(a * y * t1 * g * ds2, y2, CH2, 0);
    // + a e^{(z−y)θ₁(c)} y (θ₁−θ₂) θ₂(c)(e^{yθ₁(ac)}θ₁'(ac) − e^{yθ₂(ac)}θ₂'(ac))
    s.push(a * y * g * t2 * ds1, y1, CH1, 0);
    s.push(-a * y * g * t2 * ds2, y2, CH1, 0);
    s
}

/// `b₀₁(y, c)` (no `z` dependence; bounded, so returned as `f64`).
fn b01_value(y: f64, r: &Rates) -> f64 {
    let (a, c) = (r.a, r.c);
    let (t1, t2, s2) = (r.t1, r.t2, r.s2);
    let e2 = (y * s2).exp();
    c * (t1 - t2) * (a * e2 * s2 * (-t2 + s2) + (t2 + a * (-1.0 + e2) * t2 - a * e2 * s2) * t1)
}

/// `∂_y b₀₁(y, c)`.
fn b01_dy(y: f64, r: &Rates) -> f64 {
    let (a, c) = (r.a, r.c);
    let (t1, t2, s2) = (r.t1, r.t2, r.s2);
    let e2 = (y * s2).exp();
    c * (t1 - t2) * a * s2 * e2 * (s2 - t2) * (s2 - t1)
}

/// `b₁₁(y, c)` in log-scaled form.
fn b11_scaled(y: f64, r: &Rates) -> Scaled {
    let (t1, t2, s1, s2) = (r.t1, r.t2, r.s1, r.s2);
    let g = t1 - t2;
    let p1 = Scaled::new(-g * (s1 - t1) * (s1 - t2), y * s1);
    let p2 = Scaled::new(-g * (t2 - s2) * (s2 - t1), y * s2);
    p1.add(p2)
}

/// `∂_y b₁₁(y, c)` in log-scaled form.
fn b11_dy_scaled(y: f64, r: &Rates) -> Scaled {
    let (t1, t2, s1, s2) = (r.t1, r.t2, r.s1, r.s2);
    let g = t1 - t2;
    let p1 = Scaled::new(-g * s1 * (s1 - t1) * (s1 - t2), y * s1);
    let p2 = Scaled::new(-g * s2 * (t2 - s2) * (s2 - t1), y * s2);
    p1.add(p2)
}

/// Everything needed to evaluate the appendix formulas at fixed `(y, c)`.
struct AuxAt {
    rates: Rates,
    d: ExpSum,
    b00: ExpSum,
    b10: ExpSum,
    b01: f64,
    b11: Scaled,
}

impl AuxAt {
    fn new(y: f64, c: f64, p: &ModelParams) -> Self {
        let rates = Rates::new(c, p);
        AuxAt {
            d: d_terms(y, &rates),
            b00: b00_terms(y, &rates),
            b10: b10_terms(y, &rates),
            b01: b01_value(y, &rates),
            b11: b11_scaled(y, &rates),
            rates,
        }
    }

    fn eval(&self, u: f64) -> (Channels, Channels, Channels) {
        let cr = self.rates.channel_rates();
        (eval_sum(&self.d, cr, u), eval_sum(&self.b00, cr, u), eval_sum(&self.b10, cr, u))
    }
}

fn check_t(y: f64, z: f64) -> Result<()> {
    if !(y > 0.0) || !(z >= y) || !y.is_finite() || !z.is_finite() {
        return Err(Error::DomainError(format!("(y, z) = ({y}, {z}) is outside 0 < y <= z")));
    }
    Ok(())
}

/// `d(y, z, c)` in log-scaled form.
pub fn aux_d_scaled(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<Scaled> {
    p.require_diffusion()?;
    let rates = Rates::new(c, p);
    Ok(eval_sum(&d_terms(y, &rates), rates.channel_rates(), z - y).total(0))
}

/// `d(y, z, c)`, positive on `0 < y ≤ z`.
pub fn aux_d(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    check_t(y, z)?;
    aux_d_scaled(y, z, c, p)?.to_f64()
}

/// `b₀₀(y, z, c)`.
pub fn aux_b00(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    let rates = Rates::new(c, p);
    eval_sum(&b00_terms(y, &rates), rates.channel_rates(), z - y).total(0).to_f64()
}

/// `b₁₀(y, z, c)`.
pub fn aux_b10(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    let rates = Rates::new(c, p);
    eval_sum(&b10_terms(y, &rates), rates.channel_rates(), z - y).total(0).to_f64()
}

/// `b₀₁(y, c)`.
pub fn aux_b01(y: f64, c: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    Ok(b01_value(y, &Rates::new(c, p)))
}

/// `b₁₁(y, c)`.
pub fn aux_b11(y: f64, c: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    b11_scaled(y, &Rates::new(c, p)).to_f64()
}

/// The pair `(b₀, b₁)(y, z, w, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxB {
    pub b0: f64,
    pub b1: f64,
}

/// `b₀` and `b₁` together with their `w`- and `z`-partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxBPartials {
    pub b0: f64,
    pub b1: f64,
    pub b0w: f64,
    pub b1w: f64,
    pub b0z: f64,
    pub b1z: f64,
}

fn aux_b_core(y: f64, z: f64, w: f64, c: f64, p: &ModelParams) -> Result<AuxBPartials> {
    p.require_diffusion()?;
    check_t(y, z)?;
    let at = AuxAt::new(y, c, p);
    let r = at.rates;
    let u = z - y;
    let (d, b00, b10) = at.eval(u);
    let dv = d.total(0);
    let dd = d.total(1);
    // E(u) = e^{uθ₁(c)} − e^{uθ₂(c)} and its u-derivative.
    let e = Scaled::new(1.0, u * r.t1).sub(Scaled::new(1.0, u * r.t2));
    let de = Scaled::new(r.t1, u * r.t1).sub(Scaled::new(r.t2, u * r.t2));
    let g = r.gap();
    let b01 = Scaled::from_f64(at.b01);
    // Ratios X/d and their z-derivatives (X'd − Xd')/d².
    let ratio = |x: Scaled| x.div(dv);
    let ratio_z = |x: Scaled, dx: Scaled| dx.mul(dv).sub(x.mul(dd)).div(dv.mul(dv));
    let b0 = ratio(b00.total(0).add(e.mul(b01).scale(w))).scale(1.0 / (r.q * g));
    let b1 = ratio(b10.total(0).add(e.mul(at.b11).scale(w))).scale(1.0 / g);
    let b0w = ratio(e.mul(b01)).scale(1.0 / (r.q * g));
    let b1w = ratio(e.mul(at.b11)).scale(1.0 / g);
    let b0z = ratio_z(b00.total(0), b00.total(1))
        .add(ratio_z(e.mul(b01), de.mul(b01)).scale(w))
        .scale(1.0 / (r.q * g));
    let b1z = ratio_z(b10.total(0), b10.total(1))
        .add(ratio_z(e.mul(at.b11), de.mul(at.b11)).scale(w))
        .scale(1.0 / g);
    Ok(AuxBPartials {
        b0: b0.to_f64()?,
        b1: b1.to_f64()?,
        b0w: b0w.to_f64()?,
        b1w: b1w.to_f64()?,
        b0z: b0z.to_f64()?,
        b1z: b1z.to_f64()?,
    })
}

/// `b₀(y,z,w,c)` and `b₁(y,z,w,c)`.
pub fn aux_b(y: f64, z: f64, w: f64, c: f64, p: &ModelParams) -> Result<AuxB> {
    let r = aux_b_core(y, z, w, c, p)?;
    Ok(AuxB { b0: r.b0, b1: r.b1 })
}

/// `b₀, b₁` with exact `w`- and `z`-partials.
pub fn aux_b_partials(y: f64, z: f64, w: f64, c: f64, p: &ModelParams) -> Result<AuxBPartials> {
    aux_b_core(y, z, w, c, p)
}

/// `(∂_y b₀, ∂_y b₁)` by Richardson-extrapolated central differences.
pub fn aux_b_dy(y: f64, z: f64, w: f64, c: f64, p: &ModelParams) -> Result<(f64, f64)> {
    let b0y = richardson_derivative(|yy| Ok(aux_b_core(yy, z.max(yy), w, c, p)?.b0), y)?;
    let b1y = richardson_derivative(|yy| Ok(aux_b_core(yy, z.max(yy), w, c, p)?.b1), y)?;
    Ok((b0y, b1y))
}

/// The four basis functions at `(y, x, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub f10: f64,
    pub f11: f64,
    pub f20: f64,
    pub f21: f64,
}

/// Values and first two `x`-derivatives of the basis functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisDerivs {
    /// `[f₁₀, ∂ₓf₁₀, ∂ₓₓf₁₀]`.
    pub f10: [f64; 3],
    /// `[f₁₁, ∂ₓf₁₁, ∂ₓₓf₁₁]`.
    pub f11: [f64; 3],
    /// `[f₂₀, ∂ₓf₂₀, ∂ₓₓf₂₀]` at curve abscissa `y`.
    pub f20: [f64; 3],
    /// `[f₂₁, ∂ₓf₂₁, ∂ₓₓf₂₁]` at curve abscissa `y`.
    pub f21: [f64; 3],
}

/// Lower-branch basis `f₁₀(x,c) = (ca/q)(1 − e^{θ₂(ac)x})`,
/// `f₁₁(x,c) = e^{θ₁(ac)x} − e^{θ₂(ac)x}` and their `x`-derivatives.
pub(crate) fn lower_basis(x: f64, r: &Rates) -> Result<([f64; 3], [f64; 3])> {
    let (s1, s2) = (r.s1, r.s2);
    let e1 = exp_guarded(s1 * x)?;
    let e2 = (s2 * x).exp();
    let k = r.c * r.a / r.q;
    let f10 = [-k * (s2 * x).exp_m1(), -k * s2 * e2, -k * s2 * s2 * e2];
    let f11 = [e1 - e2, s1 * e1 - s2 * e2, s1 * s1 * e1 - s2 * s2 * e2];
    Ok((f10, f11))
}

/// `c`-derivatives `(∂_c f₁₀, ∂_c f₁₁)` of the lower basis.
pub(crate) fn lower_basis_dc(x: f64, r: &Rates) -> Result<(f64, f64)> {
    let (s1, s2) = (r.s1, r.s2);
    let e1 = exp_guarded(s1 * x)?;
    let e2 = (s2 * x).exp();
    let a = r.a;
    let df10 = a / r.q * -(s2 * x).exp_m1() - r.c * a / r.q * x * a * r.ds2 * e2;
    let df11 = x * a * (r.ds1 * e1 - r.ds2 * e2);
    Ok((df10, df11))
}

/// Upper-branch basis `f₂₀(y,x,c)`, `f₂₁(y,x,c)` and their `x`-derivatives.
///
/// `f₂₀ = c/(q(θ₂−θ₁))·(θ₂ + (a−1)e^{θ₁(x−y)}θ₂ + a e^{yθ₂(ac)}(−e^{θ₂(x−y)}θ₂(ac)
/// + e^{θ₁(x−y)}(θ₂(ac)−θ₂)) + θ₁(−1 + e^{θ₂(x−y)}(1 + a(e^{yθ₂(ac)}−1))))` is grouped
/// by exponential: constant `θ₂−θ₁`, `e^{θ₁u}` and `e^{θ₂u}` coefficients.
pub(crate) fn upper_basis(y: f64, x: f64, r: &Rates) -> Result<([f64; 3], [f64; 3])> {
    let (t1, t2, s1, s2, a, c) = (r.t1, r.t2, r.s1, r.s2, r.a, r.c);
    let u = x - y;
    let e1 = exp_guarded(t1 * u)?;
    let e2 = (t2 * u).exp();
    let y2 = (y * s2).exp();
    let y1 = exp_guarded(y * s1)?;
    let pref = c / (r.q * (t2 - t1));
    let k1 = (a - 1.0) * t2 + a * y2 * (s2 - t2);
    let k2 = -a * y2 * s2 + t1 * (1.0 + a * (y2 - 1.0));
    let f20 = [
        pref * ((t2 - t1) + k1 * e1 + k2 * e2),
        pref * (k1 * t1 * e1 + k2 * t2 * e2),
        pref * (k1 * t1 * t1 * e1 + k2 * t2 * t2 * e2),
    ];
    // f₂₁ = (e^{yθ₂(ac)}(e^{θ₁u}(θ₂−θ₂(ac)) + e^{θ₂u}(θ₂(ac)−θ₁))
    //        + e^{yθ₁(ac)}(e^{θ₂u}(θ₁−θ₁(ac)) + e^{θ₁u}(θ₁(ac)−θ₂))) / (θ₁−θ₂)
    let m1 = (y2 * (t2 - s2) + y1 * (s1 - t2)) / (t1 - t2);
    let m2 = (y2 * (s2 - t1) + y1 * (t1 - s1)) / (t1 - t2);
    let f21 = [
        m1 * e1 + m2 * e2,
        m1 * t1 * e1 + m2 * t2 * e2,
        m1 * t1 * t1 * e1 + m2 * t2 * t2 * e2,
    ];
    Ok((f20, f21))
}

/// The four basis functions `f₁₀(x,c), f₁₁(x,c), f₂₀(y,x,c), f₂₁(y,x,c)`.
pub fn basis_f(y: f64, x: f64, c: f64, p: &ModelParams) -> Result<Basis> {
    let d = basis_f_derivs(y, x, c, p)?;
    Ok(Basis {
        f10: d.f10[0],
        f11: d.f11[0],
        f20: d.f20[0],
        f21: d.f21[0],
    })
}

/// `c`-derivatives `(∂_c f₁₀(x,c), ∂_c f₁₁(x,c))` of the lower-branch basis.
pub fn lower_basis_c_derivs(x: f64, c: f64, p: &ModelParams) -> Result<(f64, f64)> {
    p.require_diffusion()?;
    if x < 0.0 {
        return Err(Error::DomainError(format!("basis needs x >= 0 (x = {x})")));
    }
    lower_basis_dc(x, &Rates::new(c, p))
}

/// Basis functions with their first two `x`-derivatives.
pub fn basis_f_derivs(y: f64, x: f64, c: f64, p: &ModelParams) -> Result<BasisDerivs> {
    p.require_diffusion()?;
    if x < 0.0 || !(y > 0.0) {
        return Err(Error::DomainError(format!("basis needs x >= 0 and y > 0 (x = {x}, y = {y})")));
    }
    let r = Rates::new(c, p);
    let (f10, f11) = lower_basis(x, &r)?;
    let (f20, f21) = upper_basis(y, x, &r)?;
    Ok(BasisDerivs { f10, f11, f20, f21 })
}

/// The smooth-fit coefficient `(1 − ∂ₓf₁₀(y,c))/∂ₓf₁₁(y,c)`: the value of `A`
/// for which the lower branch has unit slope at `x = y`.
pub fn smooth_fit_coefficient(y: f64, c: f64, p: &ModelParams) -> Result<f64> {
    p.require_diffusion()?;
    let r = Rates::new(c, p);
    let (f10, f11) = lower_basis(y, &r)?;
    Ok((1.0 - f10[1]) / f11[1])
}

/// Numerator pieces of `C₀ = N/d²` with `N = b₁₁(b₀₀'d − b₀₀d') − b₀₁(b₁₀'d − b₁₀d')`.
struct C0Parts {
    /// `N` and `∂_z N`, full.
    num: Scaled,
    num_z: Scaled,
    /// `N` and `∂_z N` with the `e^{2θ₁(c)u}` channel removed.
    num_red: Scaled,
    num_red_z: Scaled,
    /// The removed channel `K(y,c)·e^{2θ₁(c)u}` and the largest magnitude that
    /// entered it (to judge cancellation).
    k_channel: Scaled,
    k_parts: f64,
    d: Scaled,
    dd: Scaled,
}

fn c0_parts(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<C0Parts> {
    p.require_diffusion()?;
    check_t(y, z)?;
    let at = AuxAt::new(y, c, p);
    let (d, b00, b10) = at.eval(z - y);
    // Σ_{i,j} X^{(k+1)}_i d_j − X_i d^{(k+1)}_j per channel pair; k = 0 gives the
    // Wronskian-like combination, k = 1 its z-derivative (X''d − Xd'').
    let pair = |x: &Channels, i: usize, j: usize, k: usize| {
        x.v[k + 1][i].mul(d.v[0][j]).sub(x.v[0][i].mul(d.v[k + 1][j]))
    };
    let b01 = Scaled::from_f64(at.b01);
    let mut num = Scaled::ZERO;
    let mut num_z = Scaled::ZERO;
    let mut num_red = Scaled::ZERO;
    let mut num_red_z = Scaled::ZERO;
    let mut k_channel = Scaled::ZERO;
    let mut k_parts = f64::NEG_INFINITY;
    for i in 0..3 {
        for j in 0..3 {
            let t0 = at.b11.mul(pair(&b00, i, j, 0));
            let t1 = b01.mul(pair(&b10, i, j, 0));
            let v = t0.sub(t1);
            let vz = at.b11.mul(pair(&b00, i, j, 1)).sub(b01.mul(pair(&b10, i, j, 1)));
            num = num.add(v);
            num_z = num_z.add(vz);
            if i == CH1 && j == CH1 {
                k_channel = v;
                k_parts = t0.ln_abs().max(t1.ln_abs());
            } else {
                num_red = num_red.add(v);
                num_red_z = num_red_z.add(vz);
            }
        }
    }
    Ok(C0Parts {
        num,
        num_z,
        num_red,
        num_red_z,
        k_channel,
        k_parts,
        d: d.total(0),
        dd: d.total(1),
    })
}

/// `C₀(y, z, c) = b₁₁∂_z(b₀₀/d) − b₀₁∂_z(b₁₀/d)`.
pub fn c0(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    let parts = c0_parts(y, z, c, p)?;
    parts.num.div(parts.d.mul(parts.d)).to_f64()
}

/// `∂_z C₀` computed exactly from the term representation.
pub fn c0_dz_exact(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    let s = c0_parts(y, z, c, p)?;
    // (N'd − 2Nd')/d³
    s.num_z
        .mul(s.d)
        .sub(s.num.mul(s.dd).scale(2.0))
        .div(s.d.mul(s.d).mul(s.d))
        .to_f64()
}

/// `C₀` with the `e^{2θ₁(c)(z−y)}` component of its numerator removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedC0 {
    /// Reduced `C₀`, log-scaled.
    pub value: Scaled,
    /// Its exact `z`-derivative, log-scaled.
    pub dz: Scaled,
    /// The removed component `K·e^{2θ₁u}/d²`, log-scaled.
    pub removed: Scaled,
    /// Relative size of the removed component compared with the largest term
    /// that entered it (≈ machine epsilon when `K` vanishes).
    pub removed_relative: f64,
}

/// `C₀` without the `e^{2θ₁(c)u}` channel of its numerator.
///
/// At `y = b*(c)` that channel is identically zero, but when evaluated in
/// floating point its round-off residue swamps the exponentially small
/// remainder (of relative size `e^{−θ₁(c)(z−y)}`). Removing it yields a
/// function with the same zero in exact arithmetic that stays resolvable for
/// very large `c̄`.
pub fn c0_reduced(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<ReducedC0> {
    let s = c0_parts(y, z, c, p)?;
    let d2 = s.d.mul(s.d);
    // ∂_z(N_red/d²) = (N_red'd − 2N_red d')/d³
    let dz = s
        .num_red_z
        .mul(s.d)
        .sub(s.num_red.mul(s.dd).scale(2.0))
        .div(d2.mul(s.d));
    Ok(ReducedC0 {
        value: s.num_red.div(d2),
        dz,
        removed: s.k_channel.div(d2),
        removed_relative: (s.k_channel.ln_abs() - s.k_parts).exp(),
    })
}

/// `C₁₁ = b₁₁∂_y(E b₀₁/d) − b₀₁∂_y(E b₁₁/d)` with `E = e^{(z−y)θ₁} − e^{(z−y)θ₂}`,
/// evaluated through the identity `C₁₁ = (E/d)(b₁₁∂_y b₀₁ − b₀₁∂_y b₁₁)` (the
/// `∂_y(E/d)` contributions cancel exactly), log-scaled.
pub fn c11_scaled(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<Scaled> {
    p.require_diffusion()?;
    check_t(y, z)?;
    let r = Rates::new(c, p);
    let u = z - y;
    let e = Scaled::new(1.0, u * r.t1).sub(Scaled::new(1.0, u * r.t2));
    let d = aux_d_scaled(y, z, c, p)?;
    let b01 = Scaled::from_f64(b01_value(y, &r));
    let b01y = Scaled::from_f64(b01_dy(y, &r));
    let b11 = b11_scaled(y, &r);
    let b11y = b11_dy_scaled(y, &r);
    Ok(e.div(d).mul(b11.mul(b01y).sub(b01.mul(b11y))))
}

/// `C₁₁` evaluated literally, differentiating the two quotients numerically.
/// Serves as the cross-check of [`c11_scaled`] at moderate rates.
pub fn c11_literal(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    let r = Rates::new(c, p);
    let quot = |yy: f64, which: usize| -> Result<f64> {
        let rr = Rates::new(c, p);
        let u = z - yy;
        let e = (u * rr.t1).exp() - (u * rr.t2).exp();
        let d = aux_d_scaled(yy, z, c, p)?.to_f64()?;
        let num = if which == 0 {
            b01_value(yy, &rr)
        } else {
            b11_scaled(yy, &rr).to_f64()?
        };
        Ok(e * num / d)
    };
    let dq0 = richardson_derivative(|yy| quot(yy, 0), y)?;
    let dq1 = richardson_derivative(|yy| quot(yy, 1), y)?;
    Ok(b11_scaled(y, &r).to_f64()? * dq0 - b01_value(y, &r) * dq1)
}

/// The variational coefficients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalC {
    pub c0: f64,
    pub c10: f64,
    pub c11: f64,
    pub c20: f64,
    pub c21: f64,
    pub c22: f64,
}

/// `C₁₀ = b₀₁∂_y(b₁₀/d) − b₁₁∂_y(b₀₀/d)` with the `y`-derivatives by Richardson
/// differences at fixed `z`.
pub fn c10(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<f64> {
    check_t(y, z)?;
    let r = Rates::new(c, p);
    let ratio = |yy: f64, which: usize| -> Result<f64> {
        let rr = Rates::new(c, p);
        let cr = rr.channel_rates();
        let u = z - yy;
        let d = eval_sum(&d_terms(yy, &rr), cr, u).total(0);
        let x = if which == 0 {
            eval_sum(&b00_terms(yy, &rr), cr, u).total(0)
        } else {
            eval_sum(&b10_terms(yy, &rr), cr, u).total(0)
        };
        x.div(d).to_f64()
    };
    let d_r10 = richardson_derivative(|yy| ratio(yy, 1), y)?;
    let d_r00 = richardson_derivative(|yy| ratio(yy, 0), y)?;
    Ok(b01_value(y, &r) * d_r10 - b11_scaled(y, &r).to_f64()? * d_r00)
}

/// All six variational coefficients. `C₂₁ = ∂_yC₀`, `C₂₂ = ∂_zC₀` and
/// `C₂₀ = −∂_cC₀` use fourth-order central differences with Richardson
/// extrapolation (step `max(1e-5, 1e-7·|argument|)`).
pub fn variational_c(y: f64, z: f64, c: f64, p: &ModelParams) -> Result<VariationalC> {
    check_t(y, z)?;
    if z <= y {
        return Err(Error::DomainError(format!("variational coefficients need z > y (y = z = {y})")));
    }
    let c0v = c0(y, z, c, p)?;
    let c21 = richardson_derivative(|yy| c0(yy, z, c, p), y)?;
    let c22 = richardson_derivative(|zz| c0(y, zz, c, p), z)?;
    let c20 = -richardson_derivative(|cc| c0(y, z, cc, p), c)?;
    let c10v = c10(y, z, c, p)?;
    let c11v = c11_scaled(y, z, c, p)?.to_f64()?;
    Ok(VariationalC {
        c0: c0v,
        c10: c10v,
        c11: c11v,
        c20,
        c21,
        c22,
    })
}
