//! Model parameters from a `key=value` file and flags, and grid specifications.

use std::collections::BTreeMap;

use clap::Args;
use drawdown_core::ModelParams;

use crate::error::CliError;

/// Model keys accepted in a configuration file, in canonical order.
pub const MODEL_KEYS: [&str; 5] = ["mu", "sigma", "q", "a", "cbar"];

/// Values used for keys given neither by flag nor by file.
const DEFAULTS: [f64; 5] = [4.0, 2.0, 0.1, 0.5, 3.0];

/// Model flags shared by every subcommand. Flags override the file given
/// with `--config`; keys missing from both take the reference instance
/// (`mu=4, sigma=2, q=0.1, a=0.5, cbar=3`).
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Configuration file with `mu`, `sigma`, `q`, `a`, `cbar` as `key=value` lines.
    #[arg(long, global = true)]
    pub config: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub cbar: Option<f64>,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped,
/// unknown and duplicated keys are errors.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got `{raw}`", n + 1)))?;
        let k = k.trim();
        if !MODEL_KEYS.contains(&k) {
            return Err(CliError::usage(format!("config line {}: unknown key `{k}`", n + 1)));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("config line {}: `{}` is not a number", n + 1, v.trim())))?;
        if out.insert(k.to_string(), v).is_some() {
            return Err(CliError::usage(format!("config line {}: duplicate key `{k}`", n + 1)));
        }
    }
    Ok(out)
}

impl ModelArgs {
    /// Resolves flag, file and default values for every model key.
    pub fn values(&self) -> Result<[f64; 5], CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{path}: {e}")))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        let flags = [self.mu, self.sigma, self.q, self.a, self.cbar];
        let mut v = DEFAULTS;
        for (i, key) in MODEL_KEYS.iter().enumerate() {
            if let Some(x) = flags[i].or_else(|| file.get(*key).copied()) {
                v[i] = x;
            }
        }
        Ok(v)
    }

    /// Validated model parameters.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let [mu, sigma, q, a, cbar] = self.values()?;
        Ok(ModelParams::new(mu, sigma, q, a, cbar)?)
    }
}

/// Parses `lo:hi:n` (`n` evenly spaced points including both ends),
/// `log:lo:hi:n` (geometric spacing) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("bad grid `{spec}` (expected lo:hi:n, log:lo:hi:n or v1,v2,...)"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let (log, range) = match parts.as_slice() {
        ["log", lo, hi, n] => (true, Some((num(lo)?, num(hi)?, *n))),
        [lo, hi, n] => (false, Some((num(lo)?, num(hi)?, *n))),
        [_] => (false, None),
        _ => return Err(bad()),
    };
    let grid = match range {
        None => spec.split(',').map(num).collect::<Result<Vec<f64>, _>>()?,
        Some((lo, hi, n)) => {
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if n < 2 || !(hi > lo) || (log && !(lo > 0.0)) {
                return Err(bad());
            }
            (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    if log {
                        (lo.ln() + t * (hi.ln() - lo.ln())).exp()
                    } else {
                        lo + t * (hi - lo)
                    }
                })
                .collect()
        }
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}
