//! Small numerical toolkit: guarded exponentials, log-scaled numbers,
//! Richardson-extrapolated finite differences and bracketing root finders.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Largest exponent accepted by [`exp_guarded`].
pub const EXP_GUARD: f64 = 700.0;

/// `e^arg`, refusing arguments above [`EXP_GUARD`] instead of returning infinity.
#[inline]
pub fn exp_guarded(arg: f64) -> Result<f64> {
    if arg > EXP_GUARD {
        Err(Error::OverflowGuard {
            argument: arg,
            limit: EXP_GUARD,
        })
    } else {
        Ok(arg.exp())
    }
}

/// A real number stored as `mant · e^{log}`.
///
/// Used to carry quantities whose magnitude exceeds the `f64` range, such as
/// the exponential sums of the appendix formulas at large rate ceilings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mant: f64,
    pub log: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: 0.0, log: 0.0 };

    pub fn new(mant: f64, log: f64) -> Self {
        Scaled { mant, log }.normalized()
    }

    pub fn from_f64(v: f64) -> Self {
        Scaled { mant: v, log: 0.0 }.normalized()
    }

    /// Re-centres the mantissa so that `|mant|` is close to one.
    pub fn normalized(self) -> Self {
        if self.mant == 0.0 || !self.mant.is_finite() {
            return Scaled {
                mant: self.mant,
                log: if self.mant == 0.0 { 0.0 } else { self.log },
            };
        }
        let l = self.mant.abs().ln();
        Scaled {
            mant: self.mant.signum(),
            log: self.log + l,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn signum(&self) -> f64 {
        if self.mant == 0.0 {
            0.0
        } else {
            self.mant.signum()
        }
    }

    /// Natural logarithm of the magnitude (`-inf` for zero).
    pub fn ln_abs(&self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log + self.mant.abs().ln()
        }
    }

    /// Converts to `f64`; underflows silently to zero, refuses overflow.
    pub fn to_f64(&self) -> Result<f64> {
        if self.mant == 0.0 {
            return Ok(0.0);
        }
        let l = self.ln_abs();
        if l > EXP_GUARD {
            return Err(Error::OverflowGuard {
                argument: l,
                limit: EXP_GUARD,
            });
        }
        Ok(self.mant * self.log.exp())
    }

    pub fn scale(self, k: f64) -> Scaled {
        Scaled::new(self.mant * k, self.log)
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, o: Scaled) -> Scaled {
        Scaled::new(self.mant * o.mant, self.log + o.log)
    }
}

impl Div for Scaled {
    type Output = Scaled;
    fn div(self, o: Scaled) -> Scaled {
        Scaled::new(self.mant / o.mant, self.log - o.log)
    }
}

impl Neg for Scaled {
    type Output = Scaled;
    fn neg(self) -> Scaled {
        Scaled {
            mant: -self.mant,
            log: self.log,
        }
    }
}

impl Add for Scaled {
    type Output = Scaled;
    fn add(self, o: Scaled) -> Scaled {
        if self.mant == 0.0 {
            return o;
        }
        if o.mant == 0.0 {
            return self;
        }
        let m = self.log.max(o.log);
        Scaled::new(
            self.mant * (self.log - m).exp() + o.mant * (o.log - m).exp(),
            m,
        )
    }
}

impl Sub for Scaled {
    type Output = Scaled;
    fn sub(self, o: Scaled) -> Scaled {
        self + (-o)
    }
}

/// Five-point (fourth-order) central difference of `f` at `x` with step `h`.
fn central5<F: Fn(f64) -> Result<f64>>(f: &F, x: f64, h: f64) -> Result<(f64, f64)> {
    let fm2 = f(x - 2.0 * h)?;
    let fm1 = f(x - h)?;
    let fp1 = f(x + h)?;
    let fp2 = f(x + 2.0 * h)?;
    let d = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let fmax = fm2.abs().max(fm1.abs()).max(fp1.abs()).max(fp2.abs());
    Ok((d, fmax))
}

/// Default finite-difference step: `max(1e-5, 1e-7·|x|)`.
pub fn default_step(x: f64) -> f64 {
    (1e-7 * x.abs()).max(1e-5)
}

/// Derivative by fourth-order central differences with one Richardson
/// extrapolation (steps `h` and `h/2`).
///
/// The two estimates must agree to `1e-6` relative; otherwise the step is
/// rescaled (first enlarged, then shrunk) and a [`Error::StepCollapse`] is
/// returned if no step settles. The relative scale has a floor proportional to
/// `max|f|/max(1,|x|)` so that derivatives which are legitimately near zero are
/// not rejected for round-off noise.
pub fn richardson_derivative<F: Fn(f64) -> Result<f64>>(f: F, x: f64) -> Result<f64> {
    let h0 = default_step(x);
    let mut worst = 0.0_f64;
    for factor in [1.0, 10.0, 100.0, 0.1] {
        let h = h0 * factor;
        let (d1, fmax1) = central5(&f, x, h)?;
        let (d2, fmax2) = central5(&f, x, 0.5 * h)?;
        let extrap = d2 + (d2 - d1) / 15.0;
        let floor = 1e-4 * fmax1.max(fmax2) / x.abs().max(1.0);
        let scale = d1.abs().max(d2.abs()).max(floor);
        let dis = if scale == 0.0 { 0.0 } else { (d2 - d1).abs() / scale };
        if dis <= 1e-6 {
            return Ok(extrap);
        }
        worst = worst.max(dis);
    }
    Err(Error::StepCollapse {
        at: x,
        disagreement: worst,
    })
}

/// Bisection on a bracketing interval until its width is below `tol`.
pub fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::BracketError { lo, hi, f_lo, f_hi });
    }
    for _ in 0..400 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of a sign-change scan on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignScan {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Indices `i` such that `values[i]` and `values[i+1]` have opposite signs.
    pub changes: Vec<usize>,
}

impl SignScan {
    /// Bracket `(grid[i], grid[i+1])` of the `k`-th sign change.
    pub fn bracket(&self, k: usize) -> (f64, f64) {
        let i = self.changes[k];
        (self.grid[i], self.grid[i + 1])
    }

    pub fn locations(&self) -> Vec<f64> {
        self.changes.iter().take(8).map(|&i| self.grid[i]).collect()
    }
}

/// Evaluates `f` on `n` equally spaced points of `(lo, hi]` and records sign changes.
///
/// Exact zeros on the grid are treated as belonging to the preceding sign so
/// that a root landing on a node is counted once.
pub fn scan_sign_changes<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, n: usize) -> Result<SignScan> {
    let step = (hi - lo) / n as f64;
    let grid: Vec<f64> = (1..=n).map(|i| lo + step * i as f64).collect();
    let mut values = Vec::with_capacity(n);
    for &x in &grid {
        values.push(f(x)?);
    }
    let mut changes = Vec::new();
    let mut last_sign = 0.0;
    let mut last_idx = 0usize;
    for (i, v) in values.iter().enumerate() {
        let s = if *v > 0.0 {
            1.0
        } else if *v < 0.0 {
            -1.0
        } else {
            0.0
        };
        if s == 0.0 {
            continue;
        }
        if last_sign != 0.0 && s != last_sign {
            changes.push(last_idx);
        }
        last_sign = s;
        last_idx = i;
    }
    Ok(SignScan {
        grid,
        values,
        changes,
    })
}
