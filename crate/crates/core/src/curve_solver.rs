//! Backward integration of the free-boundary ODE system for the curves
//! `γ(c) ≤ ζ(c)` and of the companion linear ODE for `A(c)`.
//!
//! Starting from `(γ, ζ)(c̄) = (b*(c̄), z*(c̄))` the system
//!
//! ```text
//! γ′ = C₁₀/C₁₁,   ζ′ = (C₂₀C₁₁ − C₂₁C₁₀)/(C₁₁C₂₂)
//! ```
//!
//! is stepped down a uniform grid, each step followed by one Newton
//! re-projection of `ζ` onto `C₀(γ, ζ, c) = 0`. `A` then solves
//! `A′ = b₀(γ, ζ, γ′, c) + b₁(γ, ζ, γ′, c)·A` from
//! `A(c̄) = B(c̄, b*)/√((μ−ac̄)² + 2qσ²)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::boundary_asymptotics::solve_zstar_with_bstar;
use crate::closed_forms::{aux_b, aux_b_dy, aux_b_partials, c0, c0_dz_exact, variational_c, VariationalC};
use crate::error::{Error, Result};
use crate::model_core::{optimal_refraction_threshold, refraction_coefficient_b, ModelParams};

/// Time-stepping scheme for the backward integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Stepper {
    /// Explicit Euler (first order).
    #[default]
    Euler,
    /// Heun's predictor–corrector (second order).
    Heun,
}

impl std::str::FromStr for Stepper {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Stepper::Euler),
            "heun" => Ok(Stepper::Heun),
            other => Err(Error::Parse(format!("unknown stepper '{other}' (expected euler or heun)"))),
        }
    }
}

/// Options of [`solve_curves`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Number of uniform steps over `[c_low, c̄]`.
    pub n_steps: usize,
    /// Lower end of the integration range.
    pub c_low: f64,
    pub stepper: Stepper,
    /// Newton re-projection onto `C₀ = 0` after each step.
    pub project: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            n_steps: 2000,
            c_low: 0.0,
            stepper: Stepper::Euler,
            project: true,
        }
    }
}

/// `|C₂₂|` below which the Newton projection is skipped.
pub const PROJECTION_GUARD: f64 = 1e-8;

/// Per-node record of the integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub c: f64,
    pub c11: f64,
    pub c22: f64,
    /// `C₀(γ, ζ, c)` at the accepted node.
    pub c0_residual: f64,
    /// Shift applied to `ζ` by the Newton projection (0 when skipped).
    pub projection_shift: f64,
    pub projection_skipped: bool,
}

/// Where and why the integration stopped before `c_low`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Lowest accepted rate.
    pub c_trunc: f64,
    /// Coefficient or condition that failed below `c_trunc`.
    pub which: String,
    /// Its value at the rejected point.
    pub value: f64,
}

/// Discretized optimal curves on a descending uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub params: ModelParams,
    /// Rates `c̄ = c₀ > c₁ > …`, uniform spacing.
    pub c_grid: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `A(cᵢ)`; empty until [`solve_a`] has run.
    pub a: Vec<f64>,
    /// `γ′(cᵢ) = C₁₀/C₁₁` at the nodes.
    pub gamma_prime: Vec<f64>,
    /// `A′(cᵢ)`; empty until [`solve_a`] has run.
    pub a_prime: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub truncation: Option<Truncation>,
    pub stepper: Stepper,
}

/// Relative rate below which the system's right-hand side is extrapolated.
///
/// At `c = 0` every variational coefficient vanishes (`C₀`, `C₂₁`, `C₂₂` like
/// `c`; `C₁₀`, `C₁₁` like `c²`) while the ratios forming the system stay
/// finite. For `c < δ = RATE_FLOOR·c̄` the right-hand side is therefore
/// extrapolated linearly from its values at `δ` and `2δ`.
pub const RATE_FLOOR: f64 = 1e-3;

fn curve_rhs_raw(gamma: f64, zeta: f64, c: f64, p: &ModelParams) -> Result<((f64, f64), VariationalC)> {
    let v = variational_c(gamma, zeta, c, p)?;
    let gp = v.c10 / v.c11;
    let zp = (v.c20 * v.c11 - v.c21 * v.c10) / (v.c11 * v.c22);
    Ok(((gp, zp), v))
}

/// Right-hand side of the `(γ, ζ)` system together with the coefficients
/// (those at `δ` when extrapolating).
fn curve_rhs(gamma: f64, zeta: f64, c: f64, p: &ModelParams) -> Result<((f64, f64), VariationalC)> {
    let delta = RATE_FLOOR * p.cbar;
    if c >= delta {
        return curve_rhs_raw(gamma, zeta, c, p);
    }
    let ((g1, z1), v1) = curve_rhs_raw(gamma, zeta, delta, p)?;
    let ((g2, z2), v2) = curve_rhs_raw(gamma, zeta, 2.0 * delta, p)?;
    let t = (c - delta) / delta;
    let pick = |a: f64, b: f64| a + t * (b - a);
    // coefficients keep the sign of the nearer evaluation; both must agree
    let v = if v1.c11.signum() == v2.c11.signum() && v1.c22.signum() == v2.c22.signum() {
        v1
    } else {
        VariationalC { c11: 0.0, ..v1 }
    };
    Ok(((pick(g1, g2), pick(z1, z2)), v))
}

/// Reason the integration cannot continue past a candidate point, if any.
fn singular_reason(v: &VariationalC, sign11: f64, sign22: f64) -> Option<(&'static str, f64)> {
    if !(v.c11 * sign11 > 0.0) {
        return Some(("C11", v.c11));
    }
    if !(v.c22 * sign22 > 0.0) {
        return Some(("C22", v.c22));
    }
    None
}

/// Newton projection of `ζ` onto `C₀(γ, ·, c) = 0`. Returns the new `ζ`,
/// the shift and whether the step was skipped.
fn project_zeta(gamma: f64, zeta: f64, c: f64, p: &ModelParams) -> Result<(f64, f64, bool)> {
    if c < RATE_FLOOR * p.cbar {
        // C₀ degenerates to zero at c = 0
        return Ok((zeta, 0.0, true));
    }
    let f = c0(gamma, zeta, c, p)?;
    let df = c0_dz_exact(gamma, zeta, c, p)?;
    if df.abs() < PROJECTION_GUARD {
        return Ok((zeta, 0.0, true));
    }
    let shift = -f / df;
    let z_new = zeta + shift;
    if !(z_new > gamma) {
        return Err(Error::ConstraintDrift {
            c,
            detail: format!("projection moved zeta to {z_new} below gamma = {gamma}"),
        });
    }
    let f_new = c0(gamma, z_new, c, p)?;
    if f_new.abs() > f.abs() && f_new.abs() > 1e-12 * df.abs() {
        return Err(Error::ConstraintDrift {
            c,
            detail: format!("Newton projection increased |C0| from {f:e} to {f_new:e}"),
        });
    }
    Ok((z_new, shift, false))
}

/// Integrates the curve system backward from `c̄` (step 2 of the numerical
/// procedure).
///
/// If `C₁₁` or `C₂₂` changes sign (or the curves meet) below some rate, the
/// grid is cut at the last valid node and [`CurvePair::truncation`] records
/// where and why; [`CurvePair::require_full_range`] turns that into a
/// [`Error::SingularCoefficient`].
pub fn solve_curves(p: &ModelParams, opts: &SolverOptions) -> Result<CurvePair> {
    p.require_interesting()?;
    if opts.n_steps == 0 {
        return Err(Error::InvalidParams {
            name: "n_steps",
            value: 0.0,
            constraint: "n_steps >= 1",
        });
    }
    if !(opts.c_low >= 0.0 && opts.c_low < p.cbar) {
        return Err(Error::InvalidParams {
            name: "c_low",
            value: opts.c_low,
            constraint: "0 <= c_low < cbar",
        });
    }
    let bstar = optimal_refraction_threshold(p)?;
    let zstar = solve_zstar_with_bstar(bstar, p)?;
    let h = (p.cbar - opts.c_low) / opts.n_steps as f64;

    let ((gp0, zp0), v0) = curve_rhs(bstar, zstar, p.cbar, p)?;
    let sign11 = v0.c11.signum();
    let sign22 = v0.c22.signum();
    if let Some((which, value)) = singular_reason(&v0, sign11, sign22) {
        return Err(Error::SingularCoefficient { which, c: p.cbar, value });
    }

    let mut out = CurvePair {
        params: *p,
        c_grid: vec![p.cbar],
        gamma: vec![bstar],
        zeta: vec![zstar],
        a: Vec::new(),
        gamma_prime: vec![gp0],
        a_prime: Vec::new(),
        diagnostics: vec![StepDiagnostics {
            c: p.cbar,
            c11: v0.c11,
            c22: v0.c22,
            c0_residual: v0.c0,
            projection_shift: 0.0,
            projection_skipped: false,
        }],
        truncation: None,
        stepper: opts.stepper,
    };

    let (mut g, mut z, mut slope) = (bstar, zstar, (gp0, zp0));
    for i in 1..=opts.n_steps {
        let c_new = if i == opts.n_steps {
            opts.c_low
        } else {
            p.cbar - h * i as f64
        };
        let attempt = (|| -> Result<std::result::Result<_, (&'static str, f64)>> {
            let (mut g_new, mut z_new) = (g - h * slope.0, z - h * slope.1);
            if opts.stepper == Stepper::Heun {
                if !(z_new > g_new) {
                    return Ok(Err(("gamma<zeta", z_new - g_new)));
                }
                let ((gp, zp), vp) = curve_rhs(g_new, z_new, c_new, p)?;
                if let Some(r) = singular_reason(&vp, sign11, sign22) {
                    return Ok(Err(r));
                }
                g_new = g - 0.5 * h * (slope.0 + gp);
                z_new = z - 0.5 * h * (slope.1 + zp);
            }
            if !(z_new > g_new) || !(g_new > 0.0) {
                return Ok(Err(("gamma<zeta", z_new - g_new)));
            }
            let (z_proj, shift, skipped) = if opts.project {
                project_zeta(g_new, z_new, c_new, p)?
            } else {
                (z_new, 0.0, true)
            };
            let (s, v) = curve_rhs(g_new, z_proj, c_new, p)?;
            if let Some(r) = singular_reason(&v, sign11, sign22) {
                return Ok(Err(r));
            }
            Ok(Ok((g_new, z_proj, s, v, shift, skipped)))
        })();
        let step = match attempt {
            Ok(Ok(s)) => s,
            Ok(Err((which, value))) => {
                out.truncation = Some(Truncation {
                    c_trunc: *out.c_grid.last().expect("grid is never empty"),
                    which: which.to_string(),
                    value,
                });
                break;
            }
            // Overflow or collapsed differences next to a singular point also
            // end the valid range; any other error is a genuine failure.
            Err(Error::OverflowGuard { argument, .. }) => {
                out.truncation = Some(Truncation {
                    c_trunc: *out.c_grid.last().expect("grid is never empty"),
                    which: "overflow".to_string(),
                    value: argument,
                });
                break;
            }
            Err(Error::StepCollapse { disagreement, .. }) => {
                out.truncation = Some(Truncation {
                    c_trunc: *out.c_grid.last().expect("grid is never empty"),
                    which: "step-collapse".to_string(),
                    value: disagreement,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let (g_new, z_new, s, v, shift, skipped) = step;
        g = g_new;
        z = z_new;
        slope = s;
        out.c_grid.push(c_new);
        out.gamma.push(g);
        out.zeta.push(z);
        out.gamma_prime.push(s.0);
        out.diagnostics.push(StepDiagnostics {
            c: c_new,
            c11: v.c11,
            c22: v.c22,
            c0_residual: v.c0,
            projection_shift: shift,
            projection_skipped: skipped,
        });
    }
    Ok(out)
}

/// Terminal value `A(c̄) = B(c̄, b*)/√((μ−ac̄)² + 2qσ²)`.
pub fn terminal_a(p: &ModelParams, bstar: f64) -> Result<f64> {
    let disc = (p.mu - p.a * p.cbar).hypot((2.0 * p.q).sqrt() * p.sigma);
    Ok(refraction_coefficient_b(bstar, p)? / disc)
}

/// `A′ = b₀ + b₁A` at node `i` for a given `A`.
fn a_rhs(curves: &CurvePair, i: usize, a: f64) -> Result<f64> {
    let b = aux_b(
        curves.gamma[i],
        curves.zeta[i],
        curves.gamma_prime[i],
        curves.c_grid[i],
        &curves.params,
    )?;
    Ok(b.b0 + b.b1 * a)
}

/// Integrates `A′ = b₀(γ,ζ,γ′,c) + b₁(γ,ζ,γ′,c)·A` backward along the solved
/// curves with the curves' stepper, `γ′` taken from the stored node values.
pub fn solve_a(mut curves: CurvePair) -> Result<CurvePair> {
    let n = curves.c_grid.len();
    let mut a = Vec::with_capacity(n);
    let mut ap = Vec::with_capacity(n);
    let mut cur = terminal_a(&curves.params, curves.gamma[0])?;
    a.push(cur);
    ap.push(a_rhs(&curves, 0, cur)?);
    for i in 1..n {
        let h = curves.c_grid[i - 1] - curves.c_grid[i];
        let k1 = ap[i - 1];
        let pred = cur - h * k1;
        cur = match curves.stepper {
            Stepper::Euler => pred,
            Stepper::Heun => cur - 0.5 * h * (k1 + a_rhs(&curves, i, pred)?),
        };
        a.push(cur);
        ap.push(a_rhs(&curves, i, cur)?);
    }
    curves.a = a;
    curves.a_prime = ap;
    Ok(curves)
}

/// Steps 1–2 of the procedure: curves and `A` in one call.
pub fn solve_all(p: &ModelParams, opts: &SolverOptions) -> Result<CurvePair> {
    solve_a(solve_curves(p, opts)?)
}

/// First-order optimality residuals `b₁_w·A + b₀_w`, `b₁_z·A + b₀_z` and
/// `b₁_y·A + b₀_y` at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalityResiduals {
    pub c: f64,
    pub w: f64,
    pub z: f64,
    pub y: f64,
}

/// Evaluates [`OptimalityResiduals`] at every node (requires `A`).
pub fn optimality_residuals(curves: &CurvePair) -> Result<Vec<OptimalityResiduals>> {
    curves.require_a()?;
    (0..curves.len())
        .map(|i| {
            let (y, z, w, c) = (curves.gamma[i], curves.zeta[i], curves.gamma_prime[i], curves.c_grid[i]);
            let a = curves.a[i];
            let bp = aux_b_partials(y, z, w, c, &curves.params)?;
            let (b0y, b1y) = aux_b_dy(y, z, w, c, &curves.params)?;
            Ok(OptimalityResiduals {
                c,
                w: bp.b1w * a + bp.b0w,
                z: bp.b1z * a + bp.b0z,
                y: b1y * a + b0y,
            })
        })
        .collect()
}

impl CurvePair {
    pub fn len(&self) -> usize {
        self.c_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_grid.is_empty()
    }

    /// Lowest rate covered by the grid.
    pub fn c_min(&self) -> f64 {
        *self.c_grid.last().unwrap_or(&self.params.cbar)
    }

    /// Largest `ζ` over the grid.
    pub fn zeta_max(&self) -> f64 {
        self.zeta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Errors with [`Error::SingularCoefficient`] if the grid was truncated.
    pub fn require_full_range(&self) -> Result<()> {
        match &self.truncation {
            None => Ok(()),
            Some(t) => Err(Error::SingularCoefficient {
                which: if t.which == "C11" { "C11" } else if t.which == "C22" { "C22" } else { "curve system" },
                c: t.c_trunc,
                value: t.value,
            }),
        }
    }

    fn require_a(&self) -> Result<()> {
        if self.a.len() != self.len() || self.a_prime.len() != self.len() {
            return Err(Error::InvariantViolation("A has not been solved on this grid".into()));
        }
        Ok(())
    }

    /// Locates `c` on the grid: index `i` with `c ∈ [cᵢ₊₁, cᵢ]` and the weight
    /// `t` of node `i+1` for linear interpolation.
    pub fn locate(&self, c: f64) -> Result<(usize, f64)> {
        let cbar = self.c_grid[0];
        let lo = self.c_min();
        if c < lo - 1e-12 * cbar.max(1.0) {
            return Err(Error::QueryBelowTruncation { c, c_trunc: lo });
        }
        if c > cbar * (1.0 + 1e-12) {
            return Err(Error::DomainError(format!("rate {c} above cbar = {cbar}")));
        }
        let n = self.len();
        if n == 1 {
            return Ok((0, 0.0));
        }
        let h = (cbar - self.c_grid[1]).max(f64::MIN_POSITIVE);
        let pos = ((cbar - c) / h).clamp(0.0, (n - 1) as f64);
        let mut i = (pos.floor() as usize).min(n - 2);
        // the last interval may be shorter than h
        while i + 1 < n - 1 && c < self.c_grid[i + 1] {
            i += 1;
        }
        while i > 0 && c > self.c_grid[i] {
            i -= 1;
        }
        let span = self.c_grid[i] - self.c_grid[i + 1];
        let t = if span > 0.0 { ((self.c_grid[i] - c) / span).clamp(0.0, 1.0) } else { 0.0 };
        Ok((i, t))
    }

    fn interp(&self, v: &[f64], c: f64) -> Result<f64> {
        let (i, t) = self.locate(c)?;
        if t == 0.0 || i + 1 >= v.len() {
            return Ok(v[i]);
        }
        Ok(v[i] + t * (v[i + 1] - v[i]))
    }

    pub fn gamma_at(&self, c: f64) -> Result<f64> {
        self.interp(&self.gamma, c)
    }

    pub fn zeta_at(&self, c: f64) -> Result<f64> {
        self.interp(&self.zeta, c)
    }

    pub fn gamma_prime_at(&self, c: f64) -> Result<f64> {
        self.interp(&self.gamma_prime, c)
    }

    pub fn a_at(&self, c: f64) -> Result<f64> {
        self.require_a()?;
        self.interp(&self.a, c)
    }

    pub fn a_prime_at(&self, c: f64) -> Result<f64> {
        self.require_a()?;
        self.interp(&self.a_prime, c)
    }

    /// Checks the structural invariants: equal lengths, descending grid,
    /// finite values and `0 ≤ γ ≤ ζ` at every node.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvariantViolation("empty curve grid".into()));
        }
        if self.gamma.len() != n || self.zeta.len() != n || self.gamma_prime.len() != n {
            return Err(Error::InvariantViolation("curve arrays have different lengths".into()));
        }
        if (self.c_grid[0] - self.params.cbar).abs() > 1e-9 * self.params.cbar {
            return Err(Error::InvariantViolation(format!(
                "grid starts at {} but cbar = {}",
                self.c_grid[0], self.params.cbar
            )));
        }
        for i in 0..n {
            let (c, g, z) = (self.c_grid[i], self.gamma[i], self.zeta[i]);
            if !(c.is_finite() && g.is_finite() && z.is_finite()) {
                return Err(Error::InvariantViolation(format!("non-finite value at node {i}")));
            }
            if i > 0 && !(c < self.c_grid[i - 1]) {
                return Err(Error::InvariantViolation(format!("grid not descending at node {i}")));
            }
            if !(g >= 0.0 && g <= z) {
                return Err(Error::InvariantViolation(format!(
                    "gamma <= zeta violated at c = {c}: gamma = {g}, zeta = {z}"
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `c,gamma,zeta,A` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c,gamma,zeta,A\n");
        for i in 0..self.len() {
            let a = self.a.get(i).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.c_grid[i], self.gamma[i], self.zeta[i], a
            );
        }
        s
    }

    /// Reads curves written by [`CurvePair::to_csv`] for the instance `p`.
    ///
    /// `γ′` and `A′` are recomputed from the ODE right-hand sides at the nodes.
    /// A grid ending above zero is treated as truncated at its last node.
    pub fn from_csv(p: &ModelParams, text: &str, stepper: Stepper) -> Result<CurvePair> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty curves file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["c", "gamma", "zeta", "A"] {
            return Err(Error::Parse(format!("unexpected curves header '{header}'")));
        }
        let mut c_grid = Vec::new();
        let mut gamma = Vec::new();
        let mut zeta = Vec::new();
        let mut a = Vec::new();
        for (k, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("curves row {}: {e}", k + 1)))?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("curves row {} has {} fields", k + 1, vals.len())));
            }
            c_grid.push(vals[0]);
            gamma.push(vals[1]);
            zeta.push(vals[2]);
            a.push(vals[3]);
        }
        let n = c_grid.len();
        let mut curves = CurvePair {
            params: *p,
            c_grid,
            gamma,
            zeta,
            a: Vec::new(),
            gamma_prime: vec![0.0; n],
            a_prime: Vec::new(),
            diagnostics: Vec::new(),
            truncation: None,
            stepper,
        };
        // structural checks before any coefficient evaluation
        curves.gamma_prime = vec![0.0; n];
        curves.validate()?;
        for i in 0..n {
            let ((gp, _), v) = curve_rhs(curves.gamma[i], curves.zeta[i], curves.c_grid[i], p)?;
            curves.gamma_prime[i] = gp;
            curves.diagnostics.push(StepDiagnostics {
                c: curves.c_grid[i],
                c11: v.c11,
                c22: v.c22,
                c0_residual: v.c0,
                projection_shift: 0.0,
                projection_skipped: true,
            });
        }
        if curves.c_min() > 1e-12 * p.cbar {
            curves.truncation = Some(Truncation {
                c_trunc: curves.c_min(),
                which: "file".to_string(),
                value: curves.c_min(),
            });
        }
        if a.iter().all(|v| v.is_finite()) {
            let mut ap = Vec::with_capacity(n);
            for (i, &ai) in a.iter().enumerate() {
                ap.push(a_rhs(&curves, i, ai)?);
            }
            curves.a = a;
            curves.a_prime = ap;
        } else {
            curves = solve_a(curves)?;
        }
        Ok(curves)
    }
}
