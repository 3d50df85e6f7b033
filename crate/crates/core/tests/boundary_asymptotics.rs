//! Boundary values `z*`, `x*` and their large-`c̄` behaviour.
//!
//! Reference values of `z*` below were computed independently in 40–2600 digit
//! arithmetic from the `C¹` continuation of the lower basis functions (the
//! sign of `C₀` is that of a Wronskian-type combination of `c`- and
//! `z`-derivatives of that continuation), so they do not share any code path
//! with the closed forms under test.

use drawdown_core::boundary_asymptotics::*;
use drawdown_core::model_core::{optimal_refraction_threshold, refraction_value};
use drawdown_core::{Error, ModelParams};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn zstar_matches_high_precision_references() {
    for &(a, cbar, expect) in &[
        (0.5, 3.0, 4.4443066),
        (0.5, 8.0, 39.12968),
        (0.07, 20.0, 25.72729),
        (0.07, 50.0, 117.976895),
    ] {
        let z = solve_zstar(&ModelParams::reference(a, cbar)).unwrap();
        assert!(rel(z, expect) < 2e-6, "z*(a={a}, c̄={cbar}) = {z}, reference {expect}");
    }
}

#[test]
fn zstar_at_large_ceiling_is_near_the_limit() {
    for &(a, lim) in &[(0.5, 96.57), (0.8, 84.72), (0.07, 191.2)] {
        let z = solve_zstar(&ModelParams::reference(a, 1e4)).unwrap();
        assert!(rel(z, lim) < 0.01, "a={a}: z* = {z}");
    }
}

#[test]
fn zstar_is_above_bstar() {
    for a in [0.2, 0.5, 0.8] {
        for cbar in [1.0, 3.0, 10.0, 100.0] {
            let p = ModelParams::reference(a, cbar);
            let bv = boundary_values(&p).unwrap();
            assert!(bv.zstar > bv.bstar, "a={a} c̄={cbar}: {bv:?}");
        }
    }
}

#[test]
fn degenerate_regime_is_rejected() {
    // c̄ below qσ²/(2μ) = 0.05: paying the ceiling forever is optimal
    let p = ModelParams::reference(0.5, 0.04);
    assert!(solve_zstar(&p).is_err());
}

#[test]
fn bstar_expansion_coefficient() {
    for a in [0.07, 0.5, 0.8] {
        let p = ModelParams::reference(a, 1000.0);
        let pred = asymptotic_predictions(&p);
        let b = optimal_refraction_threshold(&p).unwrap();
        let scaled = (b - p.mu / p.q) * p.cbar;
        assert!(rel(scaled, pred.bstar_coef) < 0.05, "a={a}: {scaled} vs {}", pred.bstar_coef);
    }
}

#[test]
fn zstar_expansion_coefficient() {
    for a in [0.07, 0.5, 0.8] {
        let p = ModelParams::reference(a, 1000.0);
        let pred = asymptotic_predictions(&p);
        let scaled = (solve_zstar(&p).unwrap() - pred.limit) * p.cbar;
        assert!(rel(scaled, pred.zstar_coef) < 0.15, "a={a}: {scaled} vs {}", pred.zstar_coef);
    }
}

#[test]
fn zstar_minus_xstar_is_half_variance_over_ceiling() {
    for a in [0.07, 0.5, 0.8] {
        let p = ModelParams::reference(a, 100.0);
        let bv = boundary_values(&p).unwrap();
        let gap = bv.zstar - bv.xstar.expect("x* exists at c̄ = 100");
        let target = p.sigma * p.sigma / (2.0 * p.cbar);
        assert!(rel(gap, target) < 0.2, "a={a}: {gap} vs {target}");
    }
}

#[test]
fn xstar_is_the_zero_of_the_ceiling_derivative() {
    let p = ModelParams::reference(0.5, 100.0);
    let x = solve_xstar(&p).unwrap().unwrap();
    // independent one-sided check: the value gains from a higher ceiling
    // below x* and loses above it
    let v = |x: f64, c: f64| {
        let q = p.with_cbar(c);
        refraction_value(x, optimal_refraction_threshold(&q).unwrap(), &q).unwrap()
    };
    let h = 0.5;
    assert!(v(x - 1.0, p.cbar + h) < v(x - 1.0, p.cbar));
    assert!(v(x + 1.0, p.cbar + h) > v(x + 1.0, p.cbar));
}

#[test]
fn xstar_absent_for_small_ceiling() {
    let p = ModelParams::reference(0.5, 3.0);
    let search = search_xstar(&p, solve_zstar(&p).unwrap()).unwrap();
    assert!(search.xstar.is_none());
    assert!(search.values.iter().all(|v| v.is_finite()));
}

#[test]
fn xstar_onset_for_half_drawdown() {
    let onset = xstar_onset(&ModelParams::reference(0.5, 3.0), 3.0, 4.0, 0.01).unwrap();
    assert!((onset - 3.45).abs() < 0.1, "onset {onset}");
}

#[test]
fn unconstrained_threshold_is_positive_and_regime_checked() {
    let p = ModelParams::reference(0.5, 3.0);
    let b0 = unconstrained_threshold(&p).unwrap();
    assert!(b0 > 0.0 && b0 < p.mu / p.q);
    assert!(matches!(
        unconstrained_threshold(&ModelParams::reference(0.5, 0.04)),
        Err(Error::RegimeError(_)) | Err(Error::InvalidParams { .. })
    ));
}

#[test]
fn approach_direction_from_the_left_for_moderate_drawdown() {
    for a in [0.5, 0.8] {
        let lim = zstar_limit(&ModelParams::reference(a, 1.0));
        let mut prev = 0.0;
        for cbar in [50.0, 100.0, 500.0, 1000.0] {
            let z = solve_zstar(&ModelParams::reference(a, cbar)).unwrap();
            assert!(z < lim && z > prev, "a={a} c̄={cbar}: {z}");
            prev = z;
        }
    }
}

#[test]
fn approach_direction_from_the_right_for_small_drawdown() {
    // for a = 0.07 the first-order term dominates from c̄ ≈ 70 on; below that
    // z* is still far left of the limit (117.98 at c̄ = 50)
    let lim = zstar_limit(&ModelParams::reference(0.07, 1.0));
    let mut prev = f64::INFINITY;
    for cbar in [100.0, 250.0, 500.0, 1000.0] {
        let z = solve_zstar(&ModelParams::reference(0.07, cbar)).unwrap();
        assert!(z > lim && z < prev, "c̄={cbar}: {z}");
        prev = z;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn limit_is_closed_form(a in 0.01f64..0.99) {
        let p = ModelParams::reference(a, 10.0);
        let l = asymptotic_predictions(&p).limit;
        prop_assert!((l - 40.0 * (1.0 + 1.0 / a.sqrt())).abs() <= 1e-12 * l);
    }

    #[test]
    fn zstar_coefficient_sign_follows_drawdown(a in 0.02f64..0.98) {
        // the σ-free part changes sign at a = 1/9; σ only pushes it down
        let p = ModelParams::reference(a, 10.0);
        let c = asymptotic_predictions(&p).zstar_coef;
        if a > 1.0 / 9.0 {
            prop_assert!(c < 0.0);
        }
    }
}
