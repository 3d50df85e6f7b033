//! Seeded Monte Carlo evaluation of `J(x; D) = E ∫₀^τ e^{−qt} D_t dt` for
//! admissible drawdown strategies.
//!
//! The surplus follows `dX = (μ − D_t) dt + σ dW` with `D_t` chosen by the
//! strategy from `(X_t, R_t)`, where `R_t` is the running maximum of the rate
//! (joined with the initial rate). Dividends accrue with the exact discount
//! factor over each step, and the path is absorbed at the first time it is
//! seen below zero.
//!
//! Two step schemes are available:
//!
//! * [`Scheme::Fixed`] — plain Euler–Maruyama with step `dt`, ruin detected at
//!   step granularity;
//! * [`Scheme::Adaptive`] (default) — the rate is piecewise constant between
//!   strategy boundaries, so the Gaussian increment is exact over any step that
//!   does not cross one. Steps shrink to `dt` near the boundaries (ruin level
//!   and switching curves) and grow up to `h_max` away from them; ruin between
//!   grid times is detected with the Brownian-bridge crossing probability.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path index),
//! so results are bit-identical regardless of thread scheduling.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_core::ModelParams;
use crate::value_surface::ValueSurface;

/// Identifier of the random-number scheme recorded in every result.
pub const RNG_ALGORITHM: &str = "chacha8(seed_from_u64, stream=path index)+ziggurat-normal";

/// Relative slack of the admissibility guard.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// A dividend strategy to simulate.
#[derive(Debug, Clone, Copy)]
pub enum StrategySpec<'a> {
    /// Pay the constant rate `d` until ruin.
    ConstantRate(f64),
    /// Pay `low` below `b` and `high` at or above it.
    Refraction { b: f64, low: f64, high: f64 },
    /// The two-curve strategy of a solved surface, jumping `R` to `ℓ(x, R)`
    /// on touching `ζ(R)`.
    TwoCurve(&'a ValueSurface),
    /// Pay the whole surplus at once and accept immediate ruin.
    LumpSumNow,
}

impl<'a> StrategySpec<'a> {
    /// Refraction at `b` between `a·c̄` and `c̄`.
    pub fn refraction(b: f64, p: &ModelParams) -> Self {
        StrategySpec::Refraction {
            b,
            low: p.a * p.cbar,
            high: p.cbar,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::ConstantRate(_) => "constant-rate",
            StrategySpec::Refraction { .. } => "refraction",
            StrategySpec::TwoCurve(_) => "two-curve",
            StrategySpec::LumpSumNow => "lump-sum-now",
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// Euler–Maruyama with constant step `dt`; ruin checked at grid times.
    Fixed,
    /// Exact constant-rate increments with steps in `[dt, h_max]` chosen so
    /// that a step rarely crosses a strategy boundary (`σ√h ≤ dist/sigmas`),
    /// plus the Brownian-bridge ruin correction.
    Adaptive { sigmas: f64, h_max: f64 },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Adaptive {
            sigmas: 4.0,
            h_max: 1.0,
        }
    }
}

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Step (`Fixed`) or smallest step (`Adaptive`).
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Pair path `2k+1` with the negated draws of path `2k`.
    pub antithetic: bool,
}

impl SimOptions {
    /// `dt = 1e-3`, horizon `3 ln(10³)/q`, `10⁵` paths, adaptive steps.
    pub fn for_params(p: &ModelParams, seed: u64) -> Self {
        SimOptions {
            dt: 1e-3,
            horizon: default_horizon(p),
            n_paths: 100_000,
            seed,
            scheme: Scheme::default(),
            antithetic: false,
        }
    }
}

/// `3·ln(10³)/q`: the discounted tail beyond it is below `0.1%·c̄/q`.
pub fn default_horizon(p: &ModelParams) -> f64 {
    3.0 * 1000f64.ln() / p.q
}

/// Monte Carlo estimate of a strategy's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub strategy: String,
    pub x0: f64,
    pub c0: f64,
    pub estimate: f64,
    /// Sample standard deviation over `√(independent samples)`.
    pub std_error: f64,
    pub n_paths: usize,
    /// Mean ruin time over the ruined paths (`None` if none was ruined).
    pub mean_ruin_time: Option<f64>,
    pub fraction_ruined_by_horizon: f64,
    pub seed: u64,
    pub rng: String,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub antithetic: bool,
}

impl SimulationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("simulation result serializes")
    }
}

/// One row of a path trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub r: f64,
    pub d: f64,
}

/// Raising the running maximum pays nothing instantaneously: strategies are
/// rates, not singular controls.
pub fn jump_dividend(r_old: f64, r_new: f64) -> f64 {
    debug_assert!(r_new >= r_old);
    0.0
}

/// `∫_{t}^{t+h} e^{−qs} d ds` for a constant rate.
pub fn discounted_flow(d: f64, t: f64, h: f64, q: f64) -> f64 {
    d * (-q * t).exp() * (-(-q * h).exp_m1()) / q
}

/// Rate chosen at `(x, r)`, the updated running maximum, and the distance from
/// `x` to the nearest level where the choice changes.
struct Decision {
    rate: f64,
    r: f64,
    boundary_dist: f64,
}

fn decide(s: &StrategySpec<'_>, x: f64, r: f64, p: &ModelParams) -> Result<Decision> {
    let d = match *s {
        StrategySpec::ConstantRate(d) => Decision {
            rate: d,
            r: r.max(d),
            boundary_dist: f64::INFINITY,
        },
        StrategySpec::Refraction { b, low, high } => {
            let rate = if x < b { low } else { high };
            Decision {
                rate,
                r: r.max(rate),
                boundary_dist: (x - b).abs(),
            }
        }
        StrategySpec::TwoCurve(surf) => {
            let curves = &surf.curves;
            let mut r = r;
            let mut zeta = curves.zeta_at(r)?;
            if x >= zeta && r < p.cbar {
                let ell = surf.lookup_ell(x, r)?;
                let _ = jump_dividend(r, ell);
                r = ell;
                zeta = curves.zeta_at(r)?;
            }
            let gamma = curves.gamma_at(r)?;
            let rate = if x < gamma { p.a * r } else { r };
            let mut dist = (x - gamma).abs();
            if r < p.cbar {
                dist = dist.min((zeta - x).abs());
            }
            Decision {
                rate,
                r,
                boundary_dist: dist,
            }
        }
        StrategySpec::LumpSumNow => unreachable!("lump sum is not stepped"),
    };
    let lo = p.a * d.r;
    if d.rate < lo * (1.0 - ADMISSIBILITY_SLACK) || d.rate > p.cbar * (1.0 + ADMISSIBILITY_SLACK) {
        return Err(Error::InadmissibleRate {
            rate: d.rate,
            lo,
            hi: p.cbar,
        });
    }
    Ok(d)
}

/// Outcome of one path.
#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    payoff: f64,
    ruin_time: Option<f64>,
}

/// Simulates one path; `flip` negates every draw (antithetic partner).
#[allow(clippy::too_many_arguments)]
fn run_path(
    s: &StrategySpec<'_>,
    x0: f64,
    c0: f64,
    p: &ModelParams,
    o: &SimOptions,
    rng: &mut ChaCha8Rng,
    flip: bool,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<PathOutcome> {
    let sign = if flip { -1.0 } else { 1.0 };
    let (mut t, mut x, mut r) = (0.0, x0, c0);
    let mut acc = 0.0;
    if x <= 0.0 {
        return Ok(PathOutcome {
            payoff: 0.0,
            ruin_time: Some(0.0),
        });
    }
    let s2 = p.sigma * p.sigma;
    while t < o.horizon {
        let dec = decide(s, x, r, p)?;
        r = dec.r;
        let drift = p.mu - dec.rate;
        let h = match o.scheme {
            Scheme::Fixed => o.dt,
            Scheme::Adaptive { sigmas, h_max } => {
                let dist = x.min(dec.boundary_dist);
                let mut h = (dist / (sigmas * p.sigma)).powi(2);
                if drift != 0.0 {
                    h = h.min(0.5 * dist / drift.abs());
                }
                h.clamp(o.dt, h_max.max(o.dt))
            }
        }
        .min(o.horizon - t);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRow { t, x, r, d: dec.rate });
        }
        let z: f64 = rng.sample(StandardNormal);
        let x_new = x + drift * h + p.sigma * h.sqrt() * sign * z;
        let pay = discounted_flow(dec.rate, t, h, p.q);
        let ruined = match o.scheme {
            Scheme::Fixed => x_new < 0.0,
            Scheme::Adaptive { .. } => {
                let u: f64 = rng.random();
                let u = if flip { 1.0 - u } else { u };
                x_new <= 0.0 || u < (-2.0 * x * x_new / (s2 * h)).exp()
            }
        };
        if ruined {
            let (credit, tau) = match o.scheme {
                Scheme::Fixed => (pay, t + h),
                // the crossing time is spread over the step
                Scheme::Adaptive { .. } => (0.5 * pay, t + 0.5 * h),
            };
            acc += credit;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceRow { t: tau, x: 0.0, r, d: 0.0 });
            }
            return Ok(PathOutcome {
                payoff: acc,
                ruin_time: Some(tau),
            });
        }
        acc += pay;
        t += h;
        x = x_new;
    }
    if let Some(tr) = trace {
        tr.push(TraceRow { t, x, r, d: f64::NAN });
    }
    Ok(PathOutcome {
        payoff: acc,
        ruin_time: None,
    })
}

fn check_inputs(s: &StrategySpec<'_>, x0: f64, c0: f64, p: &ModelParams, o: &SimOptions) -> Result<()> {
    p.validate()?;
    if p.sigma <= 0.0 {
        return Err(Error::DegenerateDiffusion);
    }
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::DomainError(format!("initial surplus x0 = {x0} must be >= 0")));
    }
    if !(c0 >= 0.0 && c0 <= p.cbar) {
        return Err(Error::DomainError(format!("initial rate c0 = {c0} outside [0, {}]", p.cbar)));
    }
    if !(o.dt > 0.0) || !(o.horizon > 0.0) {
        return Err(Error::DomainError(format!(
            "dt = {} and horizon = {} must be positive",
            o.dt, o.horizon
        )));
    }
    if o.n_paths == 0 || (o.antithetic && o.n_paths % 2 != 0) {
        return Err(Error::DomainError(format!(
            "n_paths = {} must be positive (and even with antithetic pairs)",
            o.n_paths
        )));
    }
    if let Scheme::Adaptive { sigmas, h_max } = o.scheme {
        if !(sigmas > 0.0) || !(h_max > 0.0) {
            return Err(Error::DomainError("adaptive scheme needs sigmas > 0 and h_max > 0".into()));
        }
    }
    if let StrategySpec::TwoCurve(surf) = s {
        if surf.params != *p {
            return Err(Error::DomainError("surface parameters differ from the simulation parameters".into()));
        }
        surf.curves.locate(c0)?;
    }
    Ok(())
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo estimate of the strategy's value from `(x0, c0)`.
///
/// Paths run in parallel; each uses its own RNG stream and the reduction is
/// sequential in path order, so the result depends only on the inputs.
pub fn simulate(s: &StrategySpec<'_>, x0: f64, c0: f64, p: &ModelParams, o: &SimOptions) -> Result<SimulationResult> {
    check_inputs(s, x0, c0, p, o)?;
    let mut res = SimulationResult {
        strategy: s.name().to_string(),
        x0,
        c0,
        estimate: 0.0,
        std_error: 0.0,
        n_paths: o.n_paths,
        mean_ruin_time: None,
        fraction_ruined_by_horizon: 0.0,
        seed: o.seed,
        rng: RNG_ALGORITHM.to_string(),
        dt: o.dt,
        horizon: o.horizon,
        scheme: o.scheme,
        antithetic: o.antithetic,
    };
    if let StrategySpec::LumpSumNow = s {
        res.estimate = x0;
        res.mean_ruin_time = Some(0.0);
        res.fraction_ruined_by_horizon = 1.0;
        return Ok(res);
    }

    // one sample per path, or per antithetic pair
    let group = if o.antithetic { 2 } else { 1 };
    let n_samples = o.n_paths / group;
    let samples: Vec<Result<(f64, usize, f64)>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(o.seed, k as u64);
            let mut payoff = 0.0;
            let mut ruined = 0;
            let mut ruin_sum = 0.0;
            for j in 0..group {
                if j == 1 {
                    rng = path_rng(o.seed, k as u64);
                }
                let out = run_path(s, x0, c0, p, o, &mut rng, j == 1, None)?;
                payoff += out.payoff;
                if let Some(tau) = out.ruin_time {
                    ruined += 1;
                    ruin_sum += tau;
                }
            }
            Ok((payoff / group as f64, ruined, ruin_sum))
        })
        .collect();

    let (mut sum, mut sum_sq, mut ruined, mut ruin_sum) = (0.0, 0.0, 0usize, 0.0);
    for r in samples {
        let (v, n, tau) = r?;
        sum += v;
        sum_sq += v * v;
        ruined += n;
        ruin_sum += tau;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    res.estimate = mean;
    res.std_error = (var / n).sqrt();
    res.fraction_ruined_by_horizon = ruined as f64 / o.n_paths as f64;
    res.mean_ruin_time = (ruined > 0).then(|| ruin_sum / ruined as f64);
    Ok(res)
}

/// Trace `(t, X, R, D)` of path `index` (the same path [`simulate`] draws).
pub fn simulate_trace(
    s: &StrategySpec<'_>,
    x0: f64,
    c0: f64,
    p: &ModelParams,
    o: &SimOptions,
    index: u64,
) -> Result<Vec<TraceRow>> {
    check_inputs(s, x0, c0, p, o)?;
    if let StrategySpec::LumpSumNow = s {
        return Ok(vec![TraceRow { t: 0.0, x: x0, r: c0, d: f64::INFINITY }]);
    }
    let mut rows = Vec::new();
    let mut rng = path_rng(o.seed, index);
    run_path(s, x0, c0, p, o, &mut rng, false, Some(&mut rows))?;
    Ok(rows)
}

/// CSV `t,X,R,D` of a trace.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("t,X,R,D\n");
    for r in rows {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.x, r.r, r.d);
    }
    s
}
