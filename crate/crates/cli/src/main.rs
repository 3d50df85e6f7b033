//! `drawdown`: solve, verify, evaluate and simulate optimal dividend
//! strategies under a drawdown constraint.
//!
//! Every command writes its outputs into `--out` (default `.`), prints a JSON
//! summary to stdout and, on failure, a JSON error to stderr. Exit codes: 0
//! success, 2 verification failed, 3 numerical error, 4 usage error.

// Negated comparisons such as `!(x >= 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drawdown_core::boundary_asymptotics::{asymptotic_predictions, boundary_values};
use drawdown_core::curve_solver::{solve_all, CurvePair, SolverOptions, Stepper};
use drawdown_core::deterministic::*;
use drawdown_core::model_core::optimal_refraction_threshold;
use drawdown_core::simulator::{simulate, simulate_trace, trace_csv, Scheme, SimOptions, StrategySpec};
use drawdown_core::value_surface::ValueSurface;
use drawdown_core::verifier::{check_marginal_conditions, check_supersolution, coefficient_condition, GridSpec, Tolerances};
use drawdown_core::ModelParams;
use serde_json::{json, Value};

use config::{parse_grid, ModelArgs};
use error::{CliError, EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAIL};

#[derive(Debug, Parser)]
#[command(name = "drawdown", version, about = "Optimal dividends under a drawdown constraint")]
struct Cli {
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Boundary values and the two free-boundary curves.
    Solve(CurveArgs),
    /// HJB supersolution and smooth-pasting checks of a curve pair.
    Verify(VerifyArgs),
    /// The candidate value function and its partials on a grid.
    Value(ValueArgs),
    /// Monte Carlo value of a strategy.
    Simulate(SimulateArgs),
    /// The deterministic (sigma = 0) closed forms.
    Det(DetArgs),
    /// Boundary values against their large-cbar expansions over a cbar grid.
    Asymptotics(AsymptoticsArgs),
}

/// How to obtain curves: read `--curves`, or integrate them.
#[derive(Debug, Clone, Args)]
struct CurveArgs {
    /// Curves CSV (`c,gamma,zeta,A`) written by `solve`; solved afresh if absent.
    #[arg(long)]
    curves: Option<String>,
    /// Integration steps on [0, cbar].
    #[arg(long, default_value_t = 4000)]
    n_steps: usize,
    /// Integration scheme: euler or heun.
    #[arg(long, default_value = "heun")]
    stepper: Stepper,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    curves: CurveArgs,
    /// Surplus points of the verification grid.
    #[arg(long, default_value_t = 400)]
    nx: usize,
    /// Rate points of the verification grid.
    #[arg(long, default_value_t = 200)]
    nc: usize,
    /// Upper end of the surplus grid (default 3·z*).
    #[arg(long)]
    x_max: Option<f64>,
    /// Bound on positive HJB residuals (default 1e-5·cbar).
    #[arg(long)]
    residual_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct ValueArgs {
    #[command(flatten)]
    curves: CurveArgs,
    /// Surplus grid: lo:hi:n, log:lo:hi:n or a comma list.
    #[arg(long, default_value = "0:60:500")]
    x_grid: String,
    /// Rate grid, same syntax.
    #[arg(long = "c", default_value = "0")]
    c_grid: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyKind {
    TwoCurve,
    ConstantRate,
    Refraction,
    LumpSumNow,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    curves: CurveArgs,
    #[arg(long, value_enum, default_value = "two-curve")]
    strategy: StrategyKind,
    #[arg(long)]
    x0: f64,
    #[arg(long, default_value_t = 0.0)]
    c0: f64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step (fixed scheme) or smallest step (adaptive scheme).
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Time horizon (default 3·ln(1000)/q).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value = "adaptive")]
    scheme: SchemeKind,
    /// Pair each path with its mirrored draws.
    #[arg(long)]
    antithetic: bool,
    /// Constant-rate strategy: the rate (default cbar).
    #[arg(long)]
    rate: Option<f64>,
    /// Refraction strategy: the threshold (default b*).
    #[arg(long)]
    b: Option<f64>,
    /// Refraction strategy: rate below the threshold (default a·cbar).
    #[arg(long)]
    low: Option<f64>,
    /// Refraction strategy: rate above the threshold (default cbar).
    #[arg(long)]
    high: Option<f64>,
    /// Also write the trace of this path index to trace.csv.
    #[arg(long)]
    trace: Option<u64>,
}

#[derive(Debug, Args)]
struct DetArgs {
    /// Surplus grid for det_value.csv: lo:hi:n, log:lo:hi:n or a comma list.
    #[arg(long)]
    x_grid: Option<String>,
}

#[derive(Debug, Args)]
struct AsymptoticsArgs {
    /// Rate ceilings: lo:hi:n, log:lo:hi:n or a comma list.
    #[arg(long, default_value = "log:10:10000:13")]
    cbar_grid: String,
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Writes `name` and echoes it to stdout.
fn emit_json(dir: &Path, name: &str, v: &Value) -> Result<(), CliError> {
    let s = pretty(v);
    write_out(dir, name, &s)?;
    print!("{s}");
    Ok(())
}

fn load_curves(p: &ModelParams, a: &CurveArgs) -> Result<CurvePair, CliError> {
    match &a.curves {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
            CurvePair::from_csv(p, &text, a.stepper).map_err(|e| CliError::input(path, e))
        }
        None => {
            let opts = SolverOptions {
                n_steps: a.n_steps,
                stepper: a.stepper,
                ..Default::default()
            };
            Ok(solve_all(p, &opts)?)
        }
    }
}

fn load_surface(p: &ModelParams, a: &CurveArgs) -> Result<ValueSurface, CliError> {
    let curves = load_curves(p, a)?;
    ValueSurface::new(curves).map_err(|e| match &a.curves {
        Some(path) => CliError::input(path, e),
        None => e.into(),
    })
}

fn cmd_solve(p: &ModelParams, out: &Path, a: &CurveArgs) -> Result<i32, CliError> {
    let mut report = json!({
        "params": p,
        "interesting_regime": p.interesting_regime(),
        "regime_threshold": p.regime_threshold(),
    });
    if !p.interesting_regime() {
        // paying the ceiling forever is optimal: b* = 0 and there are no curves
        report["bstar"] = json!(0.0);
        report["zstar"] = Value::Null;
        report["xstar"] = Value::Null;
        report["curves"] = Value::Null;
        report["degenerate"] = json!(true);
        emit_json(out, "boundary.json", &report)?;
        return Ok(EXIT_OK);
    }
    let bv = boundary_values(p)?;
    report["bstar"] = json!(bv.bstar);
    report["zstar"] = json!(bv.zstar);
    report["xstar"] = json!(bv.xstar);
    report["predictions"] = json!(asymptotic_predictions(p));
    report["degenerate"] = json!(false);
    let curves = load_curves(p, &CurveArgs { curves: None, ..a.clone() })?;
    write_out(out, "curves.csv", &curves.to_csv())?;
    report["curves"] = json!({
        "file": "curves.csv",
        "nodes": curves.len(),
        "stepper": curves.stepper,
        "c_min": curves.c_min(),
        "truncation": curves.truncation,
    });
    if let Some(t) = &curves.truncation {
        eprintln!("note: integration truncated at c = {} ({})", t.c_trunc, t.which);
    }
    emit_json(out, "boundary.json", &report)?;
    Ok(EXIT_OK)
}

fn cmd_verify(p: &ModelParams, out: &Path, a: &VerifyArgs) -> Result<i32, CliError> {
    let s = load_surface(p, &a.curves)?;
    let grid = GridSpec {
        nx: a.nx,
        nc: a.nc,
        x_max: a.x_max,
    };
    let mut tol = Tolerances::for_params(p);
    if let Some(r) = a.residual_tol {
        tol.residual = r;
    }
    let sup = check_supersolution(&s, &grid, &tol)?;
    let marg = check_marginal_conditions(&s, &grid, &tol)?;
    let (min_c11, min_c22, coef_ok) = coefficient_condition(&s.curves);
    let pass = sup.pass && marg.pass && coef_ok;
    let truncation = s.curves.truncation.as_ref().map(|t| {
        json!({
            "c_trunc": t.c_trunc,
            "which": t.which,
            "unverified_c_range": [0.0, t.c_trunc],
            "status": "QueryBelowTruncation",
        })
    });
    let report = json!({
        "pass": pass,
        "params": p,
        "valid_c_range": [s.curves.c_min(), p.cbar],
        "truncation": truncation,
        "coefficient_condition": { "min_abs_c11": min_c11, "min_abs_c22": min_c22, "pass": coef_ok },
        "supersolution": sup,
        "marginal": marg,
    });
    emit_json(out, "verification.json", &report)?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

fn cmd_value(p: &ModelParams, out: &Path, a: &ValueArgs) -> Result<i32, CliError> {
    let xs = parse_grid(&a.x_grid)?;
    let cs = parse_grid(&a.c_grid)?;
    let s = load_surface(p, &a.curves)?;
    write_out(out, "value.csv", &s.export_csv(&xs, &cs)?)?;
    let summary = json!({ "file": "value.csv", "rows": xs.len() * cs.len(), "params": p });
    print!("{}", pretty(&summary));
    Ok(EXIT_OK)
}

fn cmd_simulate(p: &ModelParams, out: &Path, a: &SimulateArgs) -> Result<i32, CliError> {
    let surface;
    let strategy = match a.strategy {
        StrategyKind::TwoCurve => {
            surface = load_surface(p, &a.curves)?;
            StrategySpec::TwoCurve(&surface)
        }
        StrategyKind::ConstantRate => StrategySpec::ConstantRate(a.rate.unwrap_or(p.cbar)),
        StrategyKind::Refraction => StrategySpec::Refraction {
            b: match a.b {
                Some(b) => b,
                None => optimal_refraction_threshold(p)?,
            },
            low: a.low.unwrap_or(p.a * p.cbar),
            high: a.high.unwrap_or(p.cbar),
        },
        StrategyKind::LumpSumNow => StrategySpec::LumpSumNow,
    };
    let opts = SimOptions {
        dt: a.dt,
        horizon: a.horizon.unwrap_or(SimOptions::for_params(p, a.seed).horizon),
        n_paths: a.paths,
        seed: a.seed,
        scheme: match a.scheme {
            SchemeKind::Adaptive => Scheme::default(),
            SchemeKind::Fixed => Scheme::Fixed,
        },
        antithetic: a.antithetic,
    };
    let r = simulate(&strategy, a.x0, a.c0, p, &opts)?;
    if let Some(index) = a.trace {
        let rows = simulate_trace(&strategy, a.x0, a.c0, p, &opts, index)?;
        write_out(out, "trace.csv", &trace_csv(&rows))?;
    }
    let mut json = r.to_json();
    json.push('\n');
    write_out(out, "simulation.json", &json)?;
    print!("{json}");
    Ok(EXIT_OK)
}

fn cmd_det(m: &ModelArgs, out: &Path, a: &DetArgs) -> Result<i32, CliError> {
    let [mu, _, q, aa, cbar] = m.values()?;
    let dp = DetParams::new(mu, q, aa, cbar)?;
    let b = det_optimal_b(&dp)?;
    let report = json!({
        "params": dp,
        "b_opt": b,
        "indifference_limit": det_indifference_x(&dp),
        "indifference_root": det_indifference_root(&dp)?,
        "xstar": det_xstar(&dp)?,
        "xstar_coefficient": det_xstar_coefficient(&dp),
    });
    if let Some(spec) = &a.x_grid {
        let mut csv = String::from("x,V,V_minus_x,lower_order_coefficient\n");
        for x in parse_grid(spec)? {
            if !(x >= 0.0) {
                return Err(CliError::usage(format!("surplus must be >= 0, got {x}")));
            }
            // below b* the switch has already happened
            let v = det_refraction_value(x, b.min(x), &dp)?;
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                num(x),
                num(v),
                num(v - x),
                num(det_lower_order_coefficient(x, &dp))
            );
        }
        write_out(out, "det_value.csv", &csv)?;
    }
    emit_json(out, "det.json", &report)?;
    Ok(EXIT_OK)
}

fn cmd_asymptotics(p: &ModelParams, out: &Path, a: &AsymptoticsArgs) -> Result<i32, CliError> {
    let mut csv = String::from("cbar,bstar,zstar,xstar,bstar_pred,zstar_pred,xstar_pred,limit\n");
    for cbar in parse_grid(&a.cbar_grid)? {
        let pc = p.with_cbar(cbar);
        pc.validate()?;
        let bv = boundary_values(&pc)?;
        let pr = asymptotic_predictions(&pc);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            num(cbar),
            num(bv.bstar),
            num(bv.zstar),
            bv.xstar.map(num).unwrap_or_default(),
            num(pr.bstar_pred),
            num(pr.zstar_pred),
            num(pr.xstar_pred),
            num(pr.limit)
        );
    }
    write_out(out, "asymptotics.csv", &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let out = cli.out.as_path();
    if let Command::Det(a) = &cli.command {
        return cmd_det(&cli.model, out, a);
    }
    let p = cli.model.params()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(&p, out, a),
        Command::Verify(a) => cmd_verify(&p, out, a),
        Command::Value(a) => cmd_value(&p, out, a),
        Command::Simulate(a) => cmd_simulate(&p, out, a),
        Command::Asymptotics(a) => cmd_asymptotics(&p, out, a),
        Command::Det(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("{}", CliError::usage(e.kind().to_string()).to_json());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
