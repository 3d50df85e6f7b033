//! Monte Carlo evaluation against closed forms, determinism and admissibility.

use std::sync::OnceLock;

use drawdown_core::curve_solver::{solve_all, SolverOptions, Stepper};
use drawdown_core::model_core::{constant_rate_value, optimal_refraction_threshold, refraction_value};
use drawdown_core::simulator::*;
use drawdown_core::value_surface::ValueSurface;
use drawdown_core::{Error, ModelParams};
use proptest::prelude::*;

fn params() -> ModelParams {
    ModelParams::reference(0.5, 3.0)
}

fn opts(n_paths: usize, seed: u64) -> SimOptions {
    SimOptions {
        n_paths,
        ..SimOptions::for_params(&params(), seed)
    }
}

fn surface() -> &'static ValueSurface {
    static S: OnceLock<ValueSurface> = OnceLock::new();
    S.get_or_init(|| {
        let o = SolverOptions {
            stepper: Stepper::Heun,
            ..Default::default()
        };
        ValueSurface::new(solve_all(&params(), &o).unwrap()).unwrap()
    })
}

#[test]
fn constant_rate_matches_closed_form() {
    let p = params();
    let r = simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &opts(100_000, 1)).unwrap();
    let exact = constant_rate_value(10.0, 3.0, &p).unwrap();
    assert!((r.estimate - exact).abs() < 3.0 * r.std_error, "{} ± {} vs {exact}", r.estimate, r.std_error);
    assert_eq!(r.n_paths, 100_000);
    assert_eq!(r.rng, RNG_ALGORITHM);
}

#[test]
fn refraction_matches_closed_form() {
    let p = params();
    let b = optimal_refraction_threshold(&p).unwrap();
    for (k, x) in [1.0, 5.0, 10.0].into_iter().enumerate() {
        let r = simulate(&StrategySpec::refraction(b, &p), x, 0.0, &p, &opts(100_000, 10 + k as u64)).unwrap();
        let exact = refraction_value(x, b, &p).unwrap();
        assert!(
            (r.estimate - exact).abs() < 3.0 * r.std_error,
            "x = {x}: {} ± {} vs {exact}",
            r.estimate,
            r.std_error
        );
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let p = params();
    let s = StrategySpec::TwoCurve(surface());
    let a = simulate(&s, 3.0, 1.0, &p, &opts(5_000, 7)).unwrap();
    let b = simulate(&s, 3.0, 1.0, &p, &opts(5_000, 7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    let c = simulate(&s, 3.0, 1.0, &p, &opts(5_000, 8)).unwrap();
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let p = params();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&StrategySpec::ConstantRate(2.0), 4.0, 0.0, &p, &opts(4_000, 3)).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn halving_the_step_changes_little() {
    let p = params();
    let o = opts(100_000, 21);
    let coarse = simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &o).unwrap();
    let fine = simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &SimOptions { dt: o.dt / 2.0, ..o }).unwrap();
    assert!((coarse.estimate - fine.estimate).abs() < 2.0 * coarse.std_error);
}

#[test]
fn fixed_step_scheme_is_close() {
    // plain Euler–Maruyama checks ruin only on the grid, which biases the
    // estimate up by O(σ√dt); at dt = 0.01 that stays well under 1%
    let p = params();
    let o = SimOptions {
        dt: 1e-2,
        scheme: Scheme::Fixed,
        ..opts(2_000, 5)
    };
    let r = simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &o).unwrap();
    let exact = constant_rate_value(10.0, 3.0, &p).unwrap();
    assert!((r.estimate - exact).abs() < 0.01 * exact + 3.0 * r.std_error);
}

#[test]
fn monotone_in_initial_surplus() {
    let p = params();
    let s = StrategySpec::TwoCurve(surface());
    let lo = simulate(&s, 2.0, 0.0, &p, &opts(20_000, 4)).unwrap();
    let hi = simulate(&s, 5.0, 0.0, &p, &opts(20_000, 4)).unwrap();
    assert!(hi.estimate + 3.0 * hi.std_error > lo.estimate - 3.0 * lo.std_error);
    assert!(hi.estimate > lo.estimate);
}

#[test]
fn two_curve_matches_surface() {
    let p = params();
    let s = surface();
    for (k, &(x, c)) in [(2.0, 1.0), (6.0, 1.5)].iter().enumerate() {
        let r = simulate(&StrategySpec::TwoCurve(s), x, c, &p, &opts(100_000, 40 + k as u64)).unwrap();
        let w = s.eval_value(x, c).unwrap();
        assert!((r.estimate - w).abs() < 3.0 * r.std_error, "({x},{c}): {} ± {} vs {w}", r.estimate, r.std_error);
    }
}

#[test]
fn suboptimal_refraction_does_not_beat_surface() {
    let p = params();
    let s = surface();
    let b = 2.0 * optimal_refraction_threshold(&p).unwrap();
    for (k, &(x, c)) in [(1.0, 0.0), (5.0, 0.0)].iter().enumerate() {
        let r = simulate(&StrategySpec::refraction(b, &p), x, c, &p, &opts(20_000, 60 + k as u64)).unwrap();
        assert!(r.estimate <= s.eval_value(x, c).unwrap() + 3.0 * r.std_error);
    }
}

#[test]
fn inadmissible_strategies_are_caught() {
    let p = params();
    let low_zero = StrategySpec::Refraction {
        b: 5.0,
        low: 0.0,
        high: 3.0,
    };
    assert!(matches!(
        simulate(&low_zero, 1.0, 1.0, &p, &opts(10, 1)),
        Err(Error::InadmissibleRate { .. })
    ));
    assert!(matches!(
        simulate(&StrategySpec::ConstantRate(4.0), 1.0, 0.0, &p, &opts(10, 1)),
        Err(Error::InadmissibleRate { .. })
    ));
    // paying a rate below a·c₀ from the start is inadmissible as well
    assert!(matches!(
        simulate(&StrategySpec::ConstantRate(1.0), 1.0, 3.0, &p, &opts(10, 1)),
        Err(Error::InadmissibleRate { .. })
    ));
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = params();
    let s = StrategySpec::ConstantRate(1.0);
    assert!(simulate(&s, -1.0, 0.0, &p, &opts(10, 1)).is_err());
    assert!(simulate(&s, 1.0, 5.0, &p, &opts(10, 1)).is_err());
    assert!(simulate(&s, 1.0, 0.0, &p, &SimOptions { dt: 0.0, ..opts(10, 1) }).is_err());
    assert!(simulate(&s, 1.0, 0.0, &p, &opts(0, 1)).is_err());
}

#[test]
fn lump_sum_pays_the_surplus() {
    let p = params();
    let r = simulate(&StrategySpec::LumpSumNow, 7.5, 0.0, &p, &opts(100, 1)).unwrap();
    assert_eq!(r.estimate, 7.5);
    assert_eq!(r.std_error, 0.0);
    assert_eq!(r.fraction_ruined_by_horizon, 1.0);
}

#[test]
fn rate_jumps_pay_only_the_flow() {
    // a frozen path paying 1 on [0, 2) and 2 on [2, 5) after one jump
    let q = 0.1f64;
    let exact = (1.0 - (-2.0 * q).exp()) / q + 2.0 * ((-2.0 * q).exp() - (-5.0 * q).exp()) / q;
    let mut acc = 0.0;
    let mut t = 0.0;
    let h = 0.25;
    while t < 5.0 - 1e-12 {
        let d = if t < 2.0 { 1.0 } else { 2.0 };
        if t == 2.0 {
            acc += jump_dividend(1.0, 2.0);
        }
        acc += discounted_flow(d, t, h, q);
        t += h;
    }
    assert!((acc - exact).abs() < 1e-12, "{acc} vs {exact}");
    assert_eq!(jump_dividend(0.5, 3.0), 0.0);
}

#[test]
fn antithetic_pairs_are_consistent() {
    let p = params();
    let o = SimOptions {
        antithetic: true,
        ..opts(40_000, 9)
    };
    let r = simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &o).unwrap();
    let exact = constant_rate_value(10.0, 3.0, &p).unwrap();
    assert!((r.estimate - exact).abs() < 3.0 * r.std_error);
    assert!(simulate(&StrategySpec::ConstantRate(3.0), 10.0, 0.0, &p, &SimOptions { n_paths: 3, ..o }).is_err());
}

#[test]
fn trace_is_admissible_and_ratchets() {
    let p = params();
    let s = StrategySpec::TwoCurve(surface());
    let o = opts(1, 2);
    let rows = simulate_trace(&s, 2.0, 0.0, &p, &o, 0).unwrap();
    assert_eq!((rows[0].t, rows[0].x), (0.0, 2.0));
    for w in rows.windows(2) {
        assert!(w[1].r >= w[0].r && w[1].t >= w[0].t);
    }
    for r in rows.iter().filter(|r| r.d.is_finite() && r.x > 0.0) {
        assert!(r.d >= p.a * r.r * (1.0 - 1e-12) && r.d <= p.cbar);
    }
    let csv = trace_csv(&rows);
    assert!(csv.starts_with("t,X,R,D\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimates_are_bounded(x in 0.0f64..20.0, c in 0.0f64..3.0, seed in 0u64..1000) {
        let p = params();
        let r = simulate(&StrategySpec::TwoCurve(surface()), x, c, &p, &opts(200, seed)).unwrap();
        prop_assert!(r.estimate >= 0.0 && r.estimate <= p.cbar / p.q);
        prop_assert!((0.0..=1.0).contains(&r.fraction_ruined_by_horizon));
    }
}
