//! The candidate value function `W^{γ,ζ}(x, c)` assembled from solved curves.
//!
//! With `H(x, c) = f₁₀(x,c) + f₁₁(x,c)A(c)` for `x < γ(c)` and
//! `H(x, c) = f₂₀(γ(c),x,c) + f₂₁(γ(c),x,c)A(c)` for `x ≥ γ(c)`, the surface is
//! `W(x, c) = H(x, c)` below `ζ(c)` and `W(x, c) = H(x, ℓ(x, c))` above, where
//! `ℓ(x, c)` is the rate the strategy jumps to.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::closed_forms::{aux_b, basis_f_derivs, lower_basis_c_derivs};
use crate::curve_solver::CurvePair;
use crate::error::{Error, Result};
use crate::model_core::ModelParams;

/// Region of the `(x, c)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `0 ≤ x < γ(c)`: pay `a·c`.
    ReducedRate,
    /// `γ(c) ≤ x < ζ(c)`: pay `c`.
    CurrentRate,
    /// `x ≥ ζ(c)`: raise the running maximum.
    Change,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::ReducedRate => "reduced",
            Region::CurrentRate => "current",
            Region::Change => "change",
        }
    }
}

/// Which closed-form branch to use for a query exactly on `γ(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    /// Regular classification (`x = γ(c)` uses the upper branch).
    #[default]
    Natural,
    /// Force the branch below `γ(c)`.
    Below,
    /// Force the branch at or above `γ(c)`.
    Above,
}

/// Action of the two-curve strategy at a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyAction {
    PayReduced { rate: f64 },
    PayCurrent { rate: f64 },
    JumpTo { target: f64 },
}

/// Partial derivatives of `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Partials {
    pub wx: f64,
    pub wxx: f64,
    pub wc: f64,
}

/// Immutable evaluator of `W^{γ,ζ}` built from solved curves (with `A`).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub params: ModelParams,
    pub curves: CurvePair,
    pub zeta_max: f64,
    /// `ζ_sup[i] = max_{j ≤ i} ζ[j]`: the largest node value of `ζ` at or
    /// above `c_grid[i]`.
    zeta_sup: Vec<f64>,
}

impl ValueSurface {
    /// Builds the surface; the curves must be valid and carry `A`.
    pub fn new(curves: CurvePair) -> Result<Self> {
        curves.validate()?;
        if curves.a.len() != curves.len() {
            return Err(Error::InvariantViolation("curves carry no A(c); run solve_a first".into()));
        }
        let zeta_sup = curves
            .zeta
            .iter()
            .scan(f64::NEG_INFINITY, |m, &z| {
                *m = m.max(z);
                Some(*m)
            })
            .collect();
        Ok(ValueSurface {
            params: curves.params,
            zeta_max: curves.zeta_max(),
            curves,
            zeta_sup,
        })
    }

    /// Largest `ζ` over `[c, c̄]`.
    fn zeta_max_above(&self, c: f64) -> Result<f64> {
        let (i, _) = self.curves.locate(c)?;
        Ok(self.curves.zeta_at(c)?.max(self.zeta_sup[i]))
    }

    fn check_query(&self, x: f64, c: f64) -> Result<()> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::DomainError(format!("surplus must be >= 0, got {x}")));
        }
        self.curves.locate(c).map(|_| ())
    }

    /// Region containing `(x, c)`.
    pub fn region(&self, x: f64, c: f64) -> Result<Region> {
        self.check_query(x, c)?;
        if x < self.curves.gamma_at(c)? {
            Ok(Region::ReducedRate)
        } else if x < self.curves.zeta_at(c)? {
            Ok(Region::CurrentRate)
        } else {
            Ok(Region::Change)
        }
    }

    /// `ℓ(x, c)`: the largest `h ≥ c` with `ζ(d) ≤ x` on `[c, h)`, found by
    /// walking the grid upward from `c` (linear interpolation of `ζ`).
    pub fn lookup_ell(&self, x: f64, c: f64) -> Result<f64> {
        self.check_query(x, c)?;
        let cbar = self.params.cbar;
        let z_c = self.curves.zeta_at(c)?;
        if x < z_c {
            return Err(Error::DomainError(format!("lookup_ell needs x >= zeta(c) = {z_c}, got {x}")));
        }
        if x >= self.zeta_max_above(c)? {
            return Ok(cbar);
        }
        let (i, _) = self.curves.locate(c)?;
        let (mut c_prev, mut z_prev) = (c, z_c);
        // nodes i, i−1, …, 0 lie at or above c
        for j in (0..=i).rev() {
            let (cj, zj) = (self.curves.c_grid[j], self.curves.zeta[j]);
            if cj <= c_prev {
                continue;
            }
            if zj > x {
                let t = if zj > z_prev { (x - z_prev) / (zj - z_prev) } else { 0.0 };
                return Ok(c_prev + t.clamp(0.0, 1.0) * (cj - c_prev));
            }
            c_prev = cj;
            z_prev = zj;
        }
        Ok(cbar)
    }

    /// Lower or upper branch of `H(x, c)` with `x`-derivatives and `∂_c`.
    fn branch(&self, x: f64, c: f64, upper: bool) -> Result<(f64, f64, f64, f64)> {
        let p = &self.params;
        let g = self.curves.gamma_at(c)?;
        let a = self.curves.a_at(c)?;
        let ap = self.curves.a_prime_at(c)?;
        let d = basis_f_derivs(g, x, c, p)?;
        if !upper {
            let w = [0, 1, 2].map(|k| d.f10[k] + d.f11[k] * a);
            let (df10, df11) = lower_basis_c_derivs(x, c, p)?;
            let wc = df10 + df11 * a + d.f11[0] * ap;
            Ok((w[0], w[1], w[2], wc))
        } else {
            let w = [0, 1, 2].map(|k| d.f20[k] + d.f21[k] * a);
            // ∂_c[f₂₀ + f₂₁A] = f₂₁(γ,x,c)·(A′ − b₀(γ,x,γ′,c) − b₁(γ,x,γ′,c)·A)
            let gp = self.curves.gamma_prime_at(c)?;
            let b = aux_b(g, x, gp, c, p)?;
            let wc = d.f21[0] * (ap - b.b0 - b.b1 * a);
            Ok((w[0], w[1], w[2], wc))
        }
    }

    /// `H(x, c)` and its partials, on the requested side of `γ(c)`.
    fn h_eval(&self, x: f64, c: f64, side: Side) -> Result<(f64, f64, f64, f64)> {
        let g = self.curves.gamma_at(c)?;
        let upper = match side {
            Side::Natural => x >= g,
            Side::Below => false,
            Side::Above => true,
        };
        self.branch(x, c, upper)
    }

    /// `W(x, c)`.
    pub fn eval_value(&self, x: f64, c: f64) -> Result<f64> {
        self.check_query(x, c)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        let z = self.curves.zeta_at(c)?;
        let rate = if x < z { c } else { self.lookup_ell(x, c)? };
        Ok(self.h_eval(x, rate, Side::Natural)?.0)
    }

    /// `(Wx, Wxx, Wc)` with the natural branch choice.
    pub fn eval_partials(&self, x: f64, c: f64) -> Result<Partials> {
        self.eval_partials_side(x, c, Side::Natural)
    }

    /// `(Wx, Wxx, Wc)`; `side` selects the branch for queries on `γ(c)`.
    /// Above `ζ(c)` the partials are those of `H(·, ℓ)` at fixed `ℓ` and
    /// `Wc = 0`.
    pub fn eval_partials_side(&self, x: f64, c: f64, side: Side) -> Result<Partials> {
        self.check_query(x, c)?;
        let z = self.curves.zeta_at(c)?;
        if x < z {
            let (_, wx, wxx, wc) = self.h_eval(x, c, side)?;
            Ok(Partials { wx, wxx, wc })
        } else {
            let ell = self.lookup_ell(x, c)?;
            let (_, wx, wxx, _) = self.h_eval(x, ell, Side::Natural)?;
            Ok(Partials { wx, wxx, wc: 0.0 })
        }
    }

    /// Strategy action at `(x, c)`.
    pub fn policy_action(&self, x: f64, c: f64) -> Result<PolicyAction> {
        match self.region(x, c)? {
            Region::ReducedRate => Ok(PolicyAction::PayReduced { rate: self.params.a * c }),
            Region::CurrentRate => Ok(PolicyAction::PayCurrent { rate: c }),
            Region::Change => {
                let ell = self.lookup_ell(x, c)?;
                if ell > c {
                    Ok(PolicyAction::JumpTo { target: ell })
                } else {
                    Ok(PolicyAction::PayCurrent { rate: c })
                }
            }
        }
    }

    /// CSV `x,c,W,Wx,Wxx,Wc,region` over the product of the two grids.
    pub fn export_csv(&self, xs: &[f64], cs: &[f64]) -> Result<String> {
        let mut s = String::from("x,c,W,Wx,Wxx,Wc,region\n");
        for &c in cs {
            for &x in xs {
                let w = self.eval_value(x, c)?;
                let d = self.eval_partials(x, c)?;
                let r = self.region(x, c)?;
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    x,
                    c,
                    w,
                    d.wx,
                    d.wxx,
                    d.wc,
                    r.as_str()
                );
            }
        }
        Ok(s)
    }
}
