//! Grid verification of candidate value functions.

use drawdown_core::curve_solver::{solve_all, SolverOptions, Stepper};
use drawdown_core::model_core::ModelParams;
use drawdown_core::value_surface::{Partials, Side, ValueSurface};
use drawdown_core::verifier::*;
use drawdown_core::Result;

fn surface(a: f64, n_steps: usize) -> ValueSurface {
    let p = ModelParams::reference(a, 3.0);
    let opts = SolverOptions {
        stepper: Stepper::Heun,
        n_steps,
        ..Default::default()
    };
    ValueSurface::new(solve_all(&p, &opts).unwrap()).unwrap()
}

#[test]
fn reference_instance_passes() {
    let s = surface(0.5, 2000);
    let tol = Tolerances::for_params(&s.params);
    let rep = check_supersolution(&s, &GridSpec::default(), &tol).unwrap();
    assert!(rep.pass, "{}", rep.to_json());
    assert_eq!(rep.evaluation_errors, 0);
    assert_eq!(rep.monotonicity_violations, Some(0));
    let m = check_marginal_conditions(&s, &GridSpec::default(), &tol).unwrap();
    assert!(m.pass, "{}", m.to_json());
    assert!(m.smooth_pasting_gap.unwrap().value < 1e-5);
    assert!(m.refraction_fit_gap.unwrap() < 1e-6);
}

#[test]
fn report_is_deterministic_and_serializes() {
    let s = surface(0.5, 500);
    let tol = Tolerances::for_params(&s.params);
    let g = GridSpec {
        nx: 60,
        nc: 30,
        x_max: None,
    };
    let a = check_supersolution(&s, &g, &tol).unwrap();
    let b = check_supersolution(&s, &g, &tol).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert!(v.get("pass").is_some() && v.get("max_residual_lc").is_some());
}

#[test]
fn ceiling_surface_passes_in_degenerate_regime() {
    // c̄ below qσ²/(2μ): paying the ceiling forever is optimal
    let p = ModelParams::reference(0.5, 0.04);
    let s = CeilingSurface { params: p };
    let tol = Tolerances::for_params(&p);
    let rep = check_supersolution(&s, &GridSpec::default(), &tol).unwrap();
    assert!(rep.pass, "{}", rep.to_json());
}

#[test]
fn ceiling_surface_fails_in_interesting_regime() {
    // above the regime threshold, running at the ceiling is not optimal and
    // L^{ac} turns positive near zero
    let p = ModelParams::reference(0.5, 3.0);
    let s = CeilingSurface { params: p };
    let rep = check_supersolution(&s, &GridSpec::default(), &Tolerances::for_params(&p)).unwrap();
    assert!(!rep.pass);
    assert!(rep.max_residual_lac.unwrap().value > rep.tolerances.residual);
}

/// A surface bumped by `ε·sin(x)`: its HJB residuals no longer vanish.
struct Bumped<'a> {
    inner: &'a ValueSurface,
    eps: f64,
}

impl Surface for Bumped<'_> {
    fn params(&self) -> &ModelParams {
        &self.inner.params
    }
    fn c_range(&self) -> (f64, f64) {
        self.inner.c_range()
    }
    fn x_extent(&self) -> f64 {
        self.inner.x_extent()
    }
    fn value(&self, x: f64, c: f64) -> Result<f64> {
        Ok(self.inner.eval_value(x, c)? + self.eps * x.sin())
    }
    fn partials(&self, x: f64, c: f64) -> Result<Partials> {
        let d = self.inner.eval_partials(x, c)?;
        Ok(Partials {
            wx: d.wx + self.eps * x.cos(),
            wxx: d.wxx - self.eps * x.sin(),
            wc: d.wc,
        })
    }
    fn partials_side(&self, x: f64, c: f64, side: Side) -> Result<Partials> {
        let d = self.inner.eval_partials_side(x, c, side)?;
        Ok(Partials {
            wx: d.wx + self.eps * x.cos(),
            wxx: d.wxx - self.eps * x.sin(),
            wc: d.wc,
        })
    }
}

#[test]
fn perturbed_surface_is_rejected() {
    let s = surface(0.5, 500);
    let tol = Tolerances::for_params(&s.params);
    let g = GridSpec {
        nx: 200,
        nc: 40,
        x_max: None,
    };
    let bumped = Bumped { inner: &s, eps: 1e-2 };
    let rep = check_supersolution(&bumped, &g, &tol).unwrap();
    assert!(!rep.pass);
    let worst = rep.max_residual_lc.unwrap().value.max(rep.max_residual_lac.unwrap().value);
    assert!(worst > tol.residual);
}

#[test]
fn coefficient_condition_holds() {
    for a in [0.2, 0.5, 0.8] {
        let s = surface(a, 500);
        let (m11, m22, ok) = coefficient_condition(&s.curves);
        assert!(ok && m11 > 0.0 && m22 > 0.0, "a = {a}");
    }
}

#[test]
fn invalid_grid_is_rejected() {
    let s = surface(0.5, 100);
    let g = GridSpec {
        nx: 1,
        nc: 1,
        x_max: None,
    };
    assert!(check_supersolution(&s, &g, &Tolerances::for_params(&s.params)).is_err());
}
