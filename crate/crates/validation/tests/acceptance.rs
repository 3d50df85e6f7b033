//! Acceptance suite: the nine acceptance criteria of the solver, each reported
//! as one `PASS`/`FAIL` line. The process exits non-zero if any criterion
//! fails.
//!
//! Pass `N` (1–9) arguments to run a subset, e.g.
//! `cargo test -p drawdown-validation --test acceptance -- 1 9`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use drawdown_core::boundary_asymptotics::*;
use drawdown_core::curve_solver::{solve_all, SolverOptions, Stepper};
use drawdown_core::deterministic::*;
use drawdown_core::model_core::{constant_rate_value, optimal_refraction_threshold, refraction_value_rates};
use drawdown_core::simulator::{simulate, SimOptions, StrategySpec};
use drawdown_core::value_surface::{Side, ValueSurface};
use drawdown_core::verifier::{check_marginal_conditions, check_supersolution, coefficient_condition, GridSpec, Tolerances};
use drawdown_core::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances pinned by the acceptance criteria.
const LIMIT_REL_TOL: f64 = 0.01;
const BSTAR_COEF_REL_TOL: f64 = 0.15;
const ZSTAR_COEF_REL_TOL: f64 = 0.15;
const GAP_REL_TOL: f64 = 0.20;
const ONSET_ABS_TOL: f64 = 0.1;
const RESIDUAL_REL_TOL: f64 = 1e-5;
const CEILING_REL_TOL: f64 = 0.01;
const MC_SIGMAS: f64 = 3.0;
const MC_PATHS: usize = 100_000;
const MC_POINTS: usize = 20;
const PASTING_TOL: f64 = 1e-5;
const WXX_JUMP_TOL: f64 = 1e-5;
const WC_ZETA_TOL: f64 = 1e-4;
const DET_ARGMAX_TOL: f64 = 1e-4;
const DET_COEF_REL_TOL: f64 = 0.05;
const DET_FLIP_REL: f64 = 1e-3;

/// Step count of the curve integration used by criteria 5–8.
const CURVE_STEPS: usize = 4000;

/// Outcome of one criterion: overall verdict plus one line per sub-check.
struct Outcome {
    lines: Vec<(bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { lines: Vec::new() }
    }
    fn check(&mut self, ok: bool, msg: String) {
        self.lines.push((ok, msg));
    }
    fn pass(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|(ok, _)| *ok)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn reference(a: f64, cbar: f64) -> ModelParams {
    ModelParams::reference(a, cbar)
}

/// Surfaces of the reference instances (a ∈ {0.2, 0.5, 0.8}, c̄ = 3), solved
/// once with Heun steps.
fn surfaces() -> &'static BTreeMap<u32, Result<ValueSurface, String>> {
    static S: OnceLock<BTreeMap<u32, Result<ValueSurface, String>>> = OnceLock::new();
    S.get_or_init(|| {
        [2u32, 5, 8]
            .into_iter()
            .map(|k| {
                let p = reference(k as f64 / 10.0, 3.0);
                let opts = SolverOptions {
                    n_steps: CURVE_STEPS,
                    stepper: Stepper::Heun,
                    ..Default::default()
                };
                let s = solve_all(&p, &opts)
                    .and_then(ValueSurface::new)
                    .map_err(|e| e.to_string());
                (k, s)
            })
            .collect()
    })
}

fn surface(a: f64) -> Result<&'static ValueSurface, String> {
    let key = (a * 10.0).round() as u32;
    surfaces()[&key].as_ref().map_err(Clone::clone)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    for &(a, target) in &[(0.5, 96.57), (0.8, 84.72), (0.07, 191.2)] {
        let p = reference(a, 1e4);
        match solve_zstar(&p) {
            Ok(z) => o.check(
                rel(z, target) <= LIMIT_REL_TOL,
                format!("a={a}: z*(1e4) = {z:.4} vs {target} (rel {:.2e})", rel(z, target)),
            ),
            Err(e) => o.check(false, format!("a={a}: {e}")),
        }
        let lim = asymptotic_predictions(&p).limit;
        let formula = p.mu / p.q * (1.0 + 1.0 / a.sqrt());
        o.check(
            (lim - formula).abs() <= 4.0 * f64::EPSILON * formula,
            format!("a={a}: limit {lim} vs (μ/q)(1+1/√a) = {formula}"),
        );
    }
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let sweep = [50.0, 100.0, 500.0, 1000.0];
    for &(a, from_right) in &[(0.07, true), (0.5, false), (0.8, false)] {
        let lim = zstar_limit(&reference(a, 1.0));
        let zs: Result<Vec<f64>, _> = sweep.iter().map(|&c| solve_zstar(&reference(a, c))).collect();
        let zs = match zs {
            Ok(z) => z,
            Err(e) => {
                o.check(false, format!("a={a}: {e}"));
                continue;
            }
        };
        // every point on the expected side, distance to the limit shrinking
        let side_ok = zs.iter().all(|&z| if from_right { z > lim } else { z < lim });
        let shrinking = zs.windows(2).all(|w| (w[1] - lim).abs() < (w[0] - lim).abs());
        let pts: Vec<String> = sweep
            .iter()
            .zip(&zs)
            .map(|(c, z)| format!("{c}:{:+.4}", z - lim))
            .collect();
        o.check(
            side_ok && shrinking,
            format!(
                "a={a}: from the {} — z*−limit at c̄ {}",
                if from_right { "right" } else { "left" },
                pts.join(", ")
            ),
        );
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    for a in [0.07, 0.5, 0.8] {
        let p = reference(a, 1000.0);
        let pred = asymptotic_predictions(&p);
        let r = (|| -> drawdown_core::Result<()> {
            let b = optimal_refraction_threshold(&p)?;
            let sb = (b - p.mu / p.q).abs() * p.cbar;
            let target_b = (p.mu * p.mu + a * p.q * p.sigma * p.sigma) / (2.0 * a * p.q);
            o.check(
                rel(sb, target_b) <= BSTAR_COEF_REL_TOL,
                format!("a={a}: |b*−μ/q|·c̄ = {sb:.3} vs {target_b:.3}"),
            );
            let sz = (solve_zstar(&p)? - pred.limit) * p.cbar;
            o.check(
                rel(sz, pred.zstar_coef) <= ZSTAR_COEF_REL_TOL,
                format!("a={a}: (z*−limit)·c̄ = {sz:.3} vs {:.3}", pred.zstar_coef),
            );
            let p100 = reference(a, 100.0);
            let bv = boundary_values(&p100)?;
            let target = p100.sigma * p100.sigma / (2.0 * p100.cbar);
            match bv.xstar {
                Some(x) => o.check(
                    rel(bv.zstar - x, target) <= GAP_REL_TOL,
                    format!("a={a}: z*−x* at c̄=100 = {:.6} vs σ²/(2c̄) = {target}", bv.zstar - x),
                ),
                None => o.check(false, format!("a={a}: no x* at c̄ = 100")),
            }
            Ok(())
        })();
        if let Err(e) = r {
            o.check(false, format!("a={a}: {e}"));
        }
    }
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    for &(a, target, lo, hi) in &[(0.07, 5.17, 4.5, 6.0), (0.5, 3.45, 3.0, 4.0), (0.8, 2.52, 2.0, 3.0)] {
        match xstar_onset(&reference(a, lo), lo, hi, 1e-3) {
            Ok(c) => o.check(
                (c - target).abs() <= ONSET_ABS_TOL,
                format!("a={a}: onset c̄ = {c:.4} vs {target}"),
            ),
            Err(e) => o.check(false, format!("a={a}: {e}")),
        }
    }
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    for a in [0.2, 0.5, 0.8] {
        let p = reference(a, 3.0);
        match solve_zstar(&p) {
            Ok(z) => o.check(true, format!("a={a}: unique C₀ zero z* = {z:.6}")),
            Err(e) => o.check(false, format!("a={a}: z*: {e}")),
        }
        let s = match surface(a) {
            Ok(s) => s,
            Err(e) => {
                o.check(false, format!("a={a}: curves: {e}"));
                continue;
            }
        };
        let c = &s.curves;
        let ordered = c.gamma.iter().zip(&c.zeta).all(|(g, z)| g <= z);
        o.check(
            c.require_full_range().is_ok() && c.c_min() == 0.0 && ordered,
            format!("a={a}: curves on [{}, {}] with γ ≤ ζ: {ordered}", c.c_min(), p.cbar),
        );
        let (m11, m22, ok) = coefficient_condition(c);
        o.check(ok, format!("a={a}: C₁₁·C₂₂ ≠ 0 (min |C₁₁| = {m11:.3e}, min |C₂₂| = {m22:.3e})"));
        let tol = Tolerances {
            residual: RESIDUAL_REL_TOL * p.cbar,
            ..Tolerances::for_params(&p)
        };
        match (
            check_supersolution(s, &GridSpec::default(), &tol),
            check_marginal_conditions(s, &GridSpec::default(), &tol),
        ) {
            (Ok(r), Ok(m)) => o.check(
                r.pass && m.pass,
                format!(
                    "a={a}: supersolution {} (max L^c {:.2e}, L^ac {:.2e}, ∂cW {:.2e}, monotonicity violations {:?}), marginal {}",
                    if r.pass { "pass" } else { "FAIL" },
                    r.max_residual_lc.map_or(f64::NAN, |e| e.value),
                    r.max_residual_lac.map_or(f64::NAN, |e| e.value),
                    r.max_wc.map_or(f64::NAN, |e| e.value),
                    r.monotonicity_violations,
                    if m.pass { "pass" } else { "FAIL" },
                ),
            ),
            (Err(e), _) | (_, Err(e)) => o.check(false, format!("a={a}: verification error {e}")),
        }
    }
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let xs: Vec<f64> = (0..=300).map(|i| 60.0 * i as f64 / 300.0).collect();
    let mut rows = Vec::new();
    for a in [0.2, 0.5, 0.8] {
        match surface(a).and_then(|s| {
            xs.iter()
                .map(|&x| s.eval_value(x, 0.0))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| e.to_string())
        }) {
            Ok(w) => rows.push(w),
            Err(e) => {
                o.check(false, format!("a={a}: {e}"));
                return o;
            }
        }
    }
    let p = reference(0.5, 3.0);
    let cap = p.cbar / p.q;
    let ordered = (0..xs.len()).all(|i| rows[0][i] >= rows[1][i] - 1e-9 && rows[1][i] >= rows[2][i] - 1e-9);
    o.check(ordered, "W(a=0.2) ≥ W(a=0.5) ≥ W(a=0.8) on [0, 60] at c = 0".into());
    match unconstrained_threshold(&p) {
        Ok(b0) => {
            let ceiling: Vec<f64> = xs
                .iter()
                .map(|&x| refraction_value_rates(x, b0, 0.0, p.cbar, &p).unwrap_or(f64::NAN))
                .collect();
            let below = rows.iter().all(|w| w.iter().zip(&ceiling).all(|(w, u)| *w <= u + 1e-9));
            o.check(below, format!("all ≤ unconstrained value (threshold {b0:.4})"));
        }
        Err(e) => o.check(false, format!("unconstrained threshold: {e}")),
    }
    let bounded = rows.iter().all(|w| w.iter().all(|v| *v <= cap * (1.0 + 1e-12)));
    o.check(bounded, format!("all ≤ c̄/q = {cap}"));
    for (a, w) in [0.2, 0.5, 0.8].iter().zip(&rows) {
        let end = *w.last().unwrap();
        o.check(
            rel(end, cap) <= CEILING_REL_TOL,
            format!("a={a}: W(60, 0) = {end:.6} within 1% of {cap}"),
        );
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let p = reference(0.5, 3.0);
    let opts = |seed| SimOptions {
        n_paths: MC_PATHS,
        ..SimOptions::for_params(&p, seed)
    };
    match (
        simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &opts(1)),
        constant_rate_value(10.0, 3.0, &p),
    ) {
        (Ok(r), Ok(v)) => o.check(
            (r.estimate - v).abs() <= MC_SIGMAS * r.std_error,
            format!(
                "constant rate 3 at x=10: {:.5} ± {:.5} vs {v:.5} (z = {:+.2})",
                r.estimate,
                r.std_error,
                (r.estimate - v) / r.std_error
            ),
        ),
        (Err(e), _) | (_, Err(e)) => o.check(false, format!("constant rate: {e}")),
    }
    let s = match surface(0.5) {
        Ok(s) => s,
        Err(e) => {
            o.check(false, e);
            return o;
        }
    };
    let bstar = match optimal_refraction_threshold(&p) {
        Ok(b) => b,
        Err(e) => {
            o.check(false, e.to_string());
            return o;
        }
    };
    let x_hi = 3.0 * s.curves.zeta[0];
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_917);
    let points: Vec<(f64, f64)> = (0..MC_POINTS)
        .map(|_| (rng.random_range(0.05..x_hi), rng.random_range(0.0..p.cbar)))
        .collect();
    let (mut worst, mut worst_sub) = (0.0f64, f64::NEG_INFINITY);
    let (mut ok_all, mut ok_sub) = (true, true);
    for (k, &(x, c)) in points.iter().enumerate() {
        let w = match s.eval_value(x, c) {
            Ok(w) => w,
            Err(e) => {
                o.check(false, format!("W({x},{c}): {e}"));
                return o;
            }
        };
        match simulate(&StrategySpec::TwoCurve(s), x, c, &p, &opts(100 + k as u64)) {
            Ok(r) => {
                let z = (r.estimate - w) / r.std_error;
                worst = if z.abs() > worst.abs() { z } else { worst };
                ok_all &= z.abs() <= MC_SIGMAS;
                o.lines.push((
                    z.abs() <= MC_SIGMAS,
                    format!("  two-curve ({x:.3}, {c:.3}): {:.5} ± {:.5} vs W = {w:.5} (z = {z:+.2})", r.estimate, r.std_error),
                ));
            }
            Err(e) => o.check(false, format!("two-curve at ({x},{c}): {e}")),
        }
        // a feasible but suboptimal strategy: refraction at 2·b*
        let sub_opts = SimOptions {
            n_paths: MC_PATHS / 5,
            ..opts(500 + k as u64)
        };
        match simulate(&StrategySpec::refraction(2.0 * bstar, &p), x, c, &p, &sub_opts) {
            Ok(r) => {
                let z = (r.estimate - w) / r.std_error;
                worst_sub = worst_sub.max(z);
                ok_sub &= z <= MC_SIGMAS;
            }
            Err(e) => o.check(false, format!("refraction at ({x},{c}): {e}")),
        }
    }
    o.check(ok_all, format!("two-curve vs W at {MC_POINTS} random points: worst z = {worst:+.2}"));
    o.check(
        ok_sub,
        format!("refraction at 2·b* never beats W by 3 s.e.: largest z = {worst_sub:+.2}"),
    );
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    for a in [0.2, 0.5, 0.8] {
        let s = match surface(a) {
            Ok(s) => s,
            Err(e) => {
                o.check(false, format!("a={a}: {e}"));
                continue;
            }
        };
        let (mut gap, mut jump, mut wc) = (0.0f64, 0.0f64, 0.0f64);
        let mut errors = 0;
        for i in 0..s.curves.len() {
            let (c, g, z) = (s.curves.c_grid[i], s.curves.gamma[i], s.curves.zeta[i]);
            match (
                s.eval_partials_side(g, c, Side::Below),
                s.eval_partials_side(g, c, Side::Above),
                s.eval_partials_side(z * (1.0 - 1e-12), c, Side::Natural),
            ) {
                (Ok(lo), Ok(hi), Ok(at_z)) => {
                    gap = gap.max((lo.wx - 1.0).abs()).max((hi.wx - 1.0).abs());
                    jump = jump.max((lo.wxx - hi.wxx).abs() / lo.wxx.abs().max(hi.wxx.abs()));
                    wc = wc.max(at_z.wc.abs());
                }
                _ => errors += 1,
            }
        }
        o.check(
            errors == 0 && gap <= PASTING_TOL && jump <= WXX_JUMP_TOL && wc <= WC_ZETA_TOL,
            format!(
                "a={a}: max |Wx(γ)−1| = {gap:.2e}, max Wxx jump = {jump:.2e}, max |∂cW(ζ)| = {wc:.2e} over {} nodes ({errors} errors)",
                s.curves.len()
            ),
        );
    }
    o
}

/// Grid scan on `[0, x]` with 10⁴ points, refined by golden section.
fn brute_argmax(x: f64, p: &DetParams) -> f64 {
    let f = |b: f64| det_refraction_value(x, b, p).unwrap_or(f64::NEG_INFINITY);
    let n = 10_000;
    let i = (0..=n)
        .max_by(|&i, &j| f(x * i as f64 / n as f64).total_cmp(&f(x * j as f64 / n as f64)))
        .unwrap();
    let h = x / n as f64;
    let (mut lo, mut hi) = ((x * i as f64 / n as f64 - h).max(0.0), (x * i as f64 / n as f64 + h).min(x));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let r = (|| -> drawdown_core::Result<()> {
        let p = DetParams::new(4.0, 0.1, 0.5, 100.0)?;
        let b = det_optimal_b(&p)?;
        let brute = brute_argmax(50.0, &p);
        o.check(
            (b - brute).abs() <= DET_ARGMAX_TOL,
            format!("b*_det = {b:.8} vs brute-force argmax {brute:.8}"),
        );
        let p5 = p.with_cbar(1e5);
        let b5 = det_optimal_b(&p5)?;
        for x in [50.0, 80.0, 120.0] {
            let scaled = (det_refraction_value(x, b5, &p5)? - x) * p5.cbar;
            let coef = det_lower_order_coefficient(x, &p5);
            o.check(
                rel(scaled, coef) <= DET_COEF_REL_TOL,
                format!("x={x}: (V−x)·c̄ at c̄=1e5 = {scaled:.4} vs {coef:.4}"),
            );
        }
        let p6 = p.with_cbar(1e6);
        let b6 = det_optimal_b(&p6)?;
        let xi = det_indifference_x(&p6);
        let below = det_refraction_value(xi * (1.0 - DET_FLIP_REL), b6, &p6)? - xi * (1.0 - DET_FLIP_REL);
        let above = det_refraction_value(xi * (1.0 + DET_FLIP_REL), b6, &p6)? - xi * (1.0 + DET_FLIP_REL);
        o.check(
            below > 0.0 && above < 0.0,
            format!("V−x at c̄=1e6 flips sign across {xi:.4}·(1 ∓ 1e-3): {below:.3e} / {above:.3e}"),
        );
        Ok(())
    })();
    if let Err(e) = r {
        o.check(false, e.to_string());
    }
    o
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("limit values", criterion_1),
        ("approach direction", criterion_2),
        ("expansion coefficients", criterion_3),
        ("x* existence thresholds", criterion_4),
        ("reference pipeline", criterion_5),
        ("value-function ordering", criterion_6),
        ("Monte Carlo oracle equivalence", criterion_7),
        ("smooth pasting", criterion_8),
        ("deterministic sandbox", criterion_9),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome {
                lines: vec![(false, format!("panicked: {msg}"))],
            }
        });
        for (ok, line) in &outcome.lines {
            println!("    [{}] {line}", if *ok { "ok" } else { "FAIL" });
        }
        let verdict = if outcome.pass() { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} [{:.1}s]", t.elapsed().as_secs_f64());
        if !outcome.pass() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
