//! Grid verification of the sufficient optimality conditions for a candidate
//! value surface: the HJB supersolution inequalities
//! `L^c(W) ≤ 0`, `L^{ac}(W) ≤ 0`, `∂_c W ≤ 0`, smooth pasting at `γ(c)`,
//! monotonicity, and the marginal-value conditions `∂ₓW ≥ 1` below `γ(c)` and
//! `∂ₓW ≤ 1` between the curves.
//!
//! The grid check is a necessary-condition surrogate on the smooth regions plus
//! the pasting checks on the curves; it is not a proof of the viscosity
//! property at the kinks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_solver::CurvePair;
use crate::error::{Error, Result};
use crate::model_core::{characteristic_roots, constant_rate_value, optimal_refraction_threshold, ModelParams};
use crate::value_surface::{Partials, Side, ValueSurface};

/// A candidate value function that can be verified.
pub trait Surface: Sync {
    fn params(&self) -> &ModelParams;
    /// Range `[c_min, c̄]` on which the surface is defined.
    fn c_range(&self) -> (f64, f64);
    /// Default upper end of the surplus grid.
    fn x_extent(&self) -> f64;
    fn value(&self, x: f64, c: f64) -> Result<f64>;
    fn partials(&self, x: f64, c: f64) -> Result<Partials>;
    /// Solved curves, when the surface is of two-curve type.
    fn curves(&self) -> Option<&CurvePair> {
        None
    }
    /// Partials on a chosen side of `γ(c)`.
    fn partials_side(&self, x: f64, c: f64, _side: Side) -> Result<Partials> {
        self.partials(x, c)
    }
}

impl Surface for ValueSurface {
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn c_range(&self) -> (f64, f64) {
        (self.curves.c_min(), self.params.cbar)
    }
    fn x_extent(&self) -> f64 {
        3.0 * self.curves.zeta[0]
    }
    fn value(&self, x: f64, c: f64) -> Result<f64> {
        self.eval_value(x, c)
    }
    fn partials(&self, x: f64, c: f64) -> Result<Partials> {
        self.eval_partials(x, c)
    }
    fn curves(&self) -> Option<&CurvePair> {
        Some(&self.curves)
    }
    fn partials_side(&self, x: f64, c: f64, side: Side) -> Result<Partials> {
        self.eval_partials_side(x, c, side)
    }
}

/// `U(x, c) = (c̄/q)(1 − e^{θ₂(c̄)x})`: paying the ceiling forever, the optimum
/// when `c̄ ≤ qσ²/(2μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeilingSurface {
    pub params: ModelParams,
}

impl Surface for CeilingSurface {
    fn params(&self) -> &ModelParams {
        &self.params
    }
    fn c_range(&self) -> (f64, f64) {
        (0.0, self.params.cbar)
    }
    fn x_extent(&self) -> f64 {
        3.0 * self.params.mu / self.params.q
    }
    fn value(&self, x: f64, _c: f64) -> Result<f64> {
        constant_rate_value(x, self.params.cbar, &self.params)
    }
    fn partials(&self, x: f64, _c: f64) -> Result<Partials> {
        let t2 = characteristic_roots(self.params.cbar, &self.params)?.theta2;
        let k = -self.params.cbar / self.params.q * (t2 * x).exp();
        Ok(Partials {
            wx: k * t2,
            wxx: k * t2 * t2,
            wc: 0.0,
        })
    }
}

/// Verification grid: `nx` surplus points on `[0, x_max]` times `nc` rates on
/// the surface's `c`-range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nc: usize,
    /// Upper end of the surplus grid; `None` uses the surface default
    /// (`3·z*` for two-curve surfaces).
    pub x_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nx: 400,
            nc: 200,
            x_max: None,
        }
    }
}

/// Tolerances of the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Bound on positive HJB residuals and on positive `∂_c W`.
    pub residual: f64,
    /// Bound on `|Wx(γ(c), c) − 1|`.
    pub smooth_pasting: f64,
    /// Bound on the relative `Wxx` jump across `γ(c)`.
    pub wxx_jump: f64,
    /// Slack in the marginal-value and monotonicity inequalities.
    pub marginal: f64,
}

impl Tolerances {
    /// Defaults: residuals `1e-5·c̄`, pasting and jumps `1e-5`, marginal slack `1e-8`.
    pub fn for_params(p: &ModelParams) -> Self {
        Tolerances {
            residual: 1e-5 * p.cbar,
            smooth_pasting: 1e-5,
            wxx_jump: 1e-5,
            marginal: 1e-8,
        }
    }
}

/// Largest value of a checked quantity and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub value: f64,
    pub x: f64,
    pub c: f64,
}

impl Extreme {
    const NONE: Extreme = Extreme {
        value: f64::NEG_INFINITY,
        x: f64::NAN,
        c: f64::NAN,
    };

    fn update(&mut self, value: f64, x: f64, c: f64) {
        if value > self.value {
            *self = Extreme { value, x, c };
        }
    }

    fn merge(self, o: Extreme) -> Extreme {
        if o.value > self.value {
            o
        } else {
            self
        }
    }
}

/// Outcome of a verification run. Components that a check does not evaluate
/// are `None`; `pass` covers the evaluated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Most positive `L^c(W)`.
    pub max_residual_lc: Option<Extreme>,
    /// Most positive `L^{ac}(W)`.
    pub max_residual_lac: Option<Extreme>,
    /// Most positive `∂_c W`.
    pub max_wc: Option<Extreme>,
    /// Worst `|Wx(γ(c), c) − 1|` over grid nodes (both sides).
    pub smooth_pasting_gap: Option<Extreme>,
    /// Worst relative `Wxx` jump across `γ(c)`.
    pub wxx_jump: Option<Extreme>,
    /// Grid points where `W` decreases in `x` (beyond the marginal slack times
    /// `c̄/q`) or increases in `c` (beyond the residual bound times the row
    /// spacing).
    pub monotonicity_violations: Option<usize>,
    /// Points with `Wx < 1` below `γ(c)`.
    pub marginal_below_violations: Option<usize>,
    /// Points with `Wx > 1` between `γ(c)` and `ζ(c)`.
    pub marginal_between_violations: Option<usize>,
    /// `|∂ₓv(b*(c̄), c̄) − 1|`.
    pub refraction_fit_gap: Option<f64>,
    /// Points where the surface could not be evaluated.
    pub evaluation_errors: usize,
    pub first_error: Option<String>,
    pub grid: GridSpec,
    pub x_max: f64,
    pub c_range: (f64, f64),
    pub tolerances: Tolerances,
    pub pass: bool,
}

impl VerificationReport {
    fn empty(grid: GridSpec, x_max: f64, c_range: (f64, f64), tolerances: Tolerances) -> Self {
        VerificationReport {
            max_residual_lc: None,
            max_residual_lac: None,
            max_wc: None,
            smooth_pasting_gap: None,
            wxx_jump: None,
            monotonicity_violations: None,
            marginal_below_violations: None,
            marginal_between_violations: None,
            refraction_fit_gap: None,
            evaluation_errors: 0,
            first_error: None,
            grid,
            x_max,
            c_range,
            tolerances,
            pass: false,
        }
    }

    fn evaluate_pass(&mut self) {
        let t = self.tolerances;
        let le = |e: &Option<Extreme>, tol: f64| e.map_or(true, |e| e.value <= tol);
        self.pass = self.evaluation_errors == 0
            && le(&self.max_residual_lc, t.residual)
            && le(&self.max_residual_lac, t.residual)
            && le(&self.max_wc, t.residual)
            && le(&self.smooth_pasting_gap, t.smooth_pasting)
            && le(&self.wxx_jump, t.wxx_jump)
            && self.monotonicity_violations.map_or(true, |n| n == 0)
            && self.marginal_below_violations.map_or(true, |n| n == 0)
            && self.marginal_between_violations.map_or(true, |n| n == 0)
            && self.refraction_fit_gap.map_or(true, |g| g <= 1e-6);
    }

    /// Pretty JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

fn grids(s: &dyn Surface, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if grid.nx < 2 || grid.nc < 1 {
        return Err(Error::InvalidParams {
            name: "grid",
            value: grid.nx.min(grid.nc) as f64,
            constraint: "nx >= 2 and nc >= 1",
        });
    }
    let x_max = grid.x_max.unwrap_or_else(|| s.x_extent());
    let (c_lo, c_hi) = s.c_range();
    let xs = (0..grid.nx).map(|i| x_max * i as f64 / (grid.nx - 1) as f64).collect();
    let cs = if grid.nc == 1 {
        vec![c_hi]
    } else {
        (0..grid.nc)
            .map(|j| c_lo + (c_hi - c_lo) * j as f64 / (grid.nc - 1) as f64)
            .collect()
    };
    Ok((xs, cs, x_max))
}

/// Row of the supersolution check at one rate.
struct Row {
    lc: Extreme,
    lac: Extreme,
    wc: Extreme,
    values: Vec<f64>,
    x_violations: usize,
    errors: usize,
    first_error: Option<String>,
}

fn supersolution_row(s: &dyn Surface, xs: &[f64], c: f64, slack: f64) -> Row {
    let p = s.params();
    let half_s2 = 0.5 * p.sigma * p.sigma;
    let mut row = Row {
        lc: Extreme::NONE,
        lac: Extreme::NONE,
        wc: Extreme::NONE,
        values: Vec::with_capacity(xs.len()),
        x_violations: 0,
        errors: 0,
        first_error: None,
    };
    for &x in xs {
        let r = s.value(x, c).and_then(|w| Ok((w, s.partials(x, c)?)));
        match r {
            Ok((w, d)) => {
                let base = half_s2 * d.wxx + p.mu * d.wx - p.q * w;
                // L^d(W) = σ²/2·Wxx + (μ−d)Wx − qW + d
                row.lc.update(base + c * (1.0 - d.wx), x, c);
                row.lac.update(base + p.a * c * (1.0 - d.wx), x, c);
                row.wc.update(d.wc, x, c);
                if let Some(&prev) = row.values.last() {
                    if w < prev - slack {
                        row.x_violations += 1;
                    }
                }
                row.values.push(w);
            }
            Err(e) => {
                row.errors += 1;
                row.first_error.get_or_insert_with(|| format!("at (x, c) = ({x}, {c}): {e}"));
                row.values.push(f64::NAN);
            }
        }
    }
    row
}

/// Smooth-pasting gaps at `γ(cᵢ)` over all grid nodes of the curves.
fn pasting(s: &dyn Surface, curves: &CurvePair) -> (Extreme, Extreme, usize, Option<String>) {
    let mut gap = Extreme::NONE;
    let mut jump = Extreme::NONE;
    let mut errors = 0;
    let mut first = None;
    for (&c, &g) in curves.c_grid.iter().zip(&curves.gamma) {
        let lo = s.partials_side(g, c, Side::Below);
        let hi = s.partials_side(g, c, Side::Above);
        match (lo, hi) {
            (Ok(lo), Ok(hi)) => {
                gap.update((lo.wx - 1.0).abs().max((hi.wx - 1.0).abs()), g, c);
                let scale = lo.wxx.abs().max(hi.wxx.abs()).max(f64::MIN_POSITIVE);
                jump.update((lo.wxx - hi.wxx).abs() / scale, g, c);
            }
            (Err(e), _) | (_, Err(e)) => {
                errors += 1;
                first.get_or_insert_with(|| format!("pasting at c = {c}: {e}"));
            }
        }
    }
    (gap, jump, errors, first)
}

/// HJB supersolution check on a grid (step 4 of the numerical procedure).
///
/// Evaluates `L^c(W)`, `L^{ac}(W)` and `∂_c W` with analytic partials at every
/// grid node, plus smooth pasting on the curve nodes and monotonicity of `W`
/// (nondecreasing in `x`, nonincreasing in `c`). Rows are evaluated in
/// parallel and reduced in grid order, so the report does not depend on the
/// schedule.
pub fn check_supersolution(s: &dyn Surface, grid: &GridSpec, tol: &Tolerances) -> Result<VerificationReport> {
    let (xs, cs, x_max) = grids(s, grid)?;
    let mut rep = VerificationReport::empty(*grid, x_max, s.c_range(), *tol);
    let slack = tol.marginal * (s.params().cbar / s.params().q);
    let rows: Vec<Row> = cs.par_iter().map(|&c| supersolution_row(s, &xs, c, slack)).collect();

    let (mut lc, mut lac, mut wc) = (Extreme::NONE, Extreme::NONE, Extreme::NONE);
    let mut mono = 0;
    for (j, row) in rows.iter().enumerate() {
        lc = lc.merge(row.lc);
        lac = lac.merge(row.lac);
        wc = wc.merge(row.wc);
        mono += row.x_violations;
        rep.evaluation_errors += row.errors;
        if rep.first_error.is_none() {
            rep.first_error = row.first_error.clone();
        }
        // cs ascends, so W must not increase from row j−1 to row j by more
        // than the integrated ∂_c W bound
        if j > 0 {
            let c_slack = tol.residual * (cs[j] - cs[j - 1]);
            for (a, b) in rows[j - 1].values.iter().zip(&row.values) {
                if b > &(a + c_slack) {
                    mono += 1;
                }
            }
        }
    }
    rep.max_residual_lc = Some(lc);
    rep.max_residual_lac = Some(lac);
    rep.max_wc = Some(wc);
    rep.monotonicity_violations = Some(mono);
    if let Some(curves) = s.curves() {
        let (gap, jump, errors, first) = pasting(s, curves);
        rep.smooth_pasting_gap = Some(gap);
        rep.wxx_jump = Some(jump);
        rep.evaluation_errors += errors;
        if rep.first_error.is_none() {
            rep.first_error = first;
        }
    }
    rep.evaluate_pass();
    Ok(rep)
}

/// Marginal-value conditions on a per-`c` surplus grid: `Wx ≥ 1` on
/// `[0, γ(c))`, `Wx ≤ 1` on `[γ(c), ζ(c)]`, smooth pasting at `γ(c)`, and the
/// refraction smooth fit `∂ₓW(b*(c̄), c̄) = 1`.
pub fn check_marginal_conditions(s: &dyn Surface, grid: &GridSpec, tol: &Tolerances) -> Result<VerificationReport> {
    let (_, cs, x_max) = grids(s, grid)?;
    let mut rep = VerificationReport::empty(*grid, x_max, s.c_range(), *tol);
    let Some(curves) = s.curves() else {
        // no curves: every point is in the paying-at-ceiling region
        rep.marginal_below_violations = Some(0);
        rep.marginal_between_violations = Some(0);
        rep.evaluate_pass();
        return Ok(rep);
    };
    let n = grid.nx;
    let counts: Vec<(usize, usize, usize, Option<String>)> = cs
        .par_iter()
        .map(|&c| {
            let (mut below, mut between, mut errors, mut first) = (0, 0, 0, None);
            let g = curves.gamma_at(c);
            let z = curves.zeta_at(c);
            let (g, z) = match (g, z) {
                (Ok(g), Ok(z)) => (g, z),
                (Err(e), _) | (_, Err(e)) => return (0, 0, 1, Some(e.to_string())),
            };
            for i in 0..n {
                // half-open grids on [0, γ) and [γ, ζ]
                let xb = g * i as f64 / n as f64;
                let xu = g + (z - g) * i as f64 / (n - 1) as f64;
                match s.partials_side(xb, c, Side::Below) {
                    Ok(d) if d.wx < 1.0 - tol.marginal => below += 1,
                    Ok(_) => {}
                    Err(e) => {
                        errors += 1;
                        first.get_or_insert_with(|| e.to_string());
                    }
                }
                match s.partials_side(xu, c, Side::Above) {
                    Ok(d) if d.wx > 1.0 + tol.marginal => between += 1,
                    Ok(_) => {}
                    Err(e) => {
                        errors += 1;
                        first.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            (below, between, errors, first)
        })
        .collect();
    let (mut below, mut between) = (0, 0);
    for (b, u, e, f) in counts {
        below += b;
        between += u;
        rep.evaluation_errors += e;
        if rep.first_error.is_none() {
            rep.first_error = f;
        }
    }
    rep.marginal_below_violations = Some(below);
    rep.marginal_between_violations = Some(between);
    let (gap, jump, errors, first) = pasting(s, curves);
    rep.smooth_pasting_gap = Some(gap);
    rep.wxx_jump = Some(jump);
    rep.evaluation_errors += errors;
    if rep.first_error.is_none() {
        rep.first_error = first;
    }
    let p = s.params();
    let bstar = optimal_refraction_threshold(p)?;
    rep.refraction_fit_gap = Some((s.partials_side(bstar, p.cbar, Side::Below)?.wx - 1.0).abs());
    rep.evaluate_pass();
    Ok(rep)
}

/// Condition `C₁₁·C₂₂ ≠ 0` along the solved grid: returns the smallest
/// `|C₁₁|` and `|C₂₂|` seen and whether both kept their sign throughout.
pub fn coefficient_condition(curves: &CurvePair) -> (f64, f64, bool) {
    let d = &curves.diagnostics;
    let s11 = d.first().map_or(0.0, |v| v.c11.signum());
    let s22 = d.first().map_or(0.0, |v| v.c22.signum());
    let mut min11 = f64::INFINITY;
    let mut min22 = f64::INFINITY;
    let mut ok = !d.is_empty();
    for v in d {
        min11 = min11.min(v.c11.abs());
        min22 = min22.min(v.c22.abs());
        ok &= v.c11 * s11 > 0.0 && v.c22 * s22 > 0.0;
    }
    (min11, min22, ok)
}
