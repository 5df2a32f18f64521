//! Command-line front end.
//!
//! Exit codes: 0 success, 1 computational failure, 2 user error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::Error;
use crate::harness::{run_deviation_study, run_tau_adaptivity_study, Estimator, StudySpec};
use crate::loss::Sample;
use crate::noise::{sample, NoiseModel};
use crate::oracle::tau_star;
use crate::solver::{fit, z_from_delta, EstimatorConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pseudohuber", version, about = "Robust mean estimation with a self-tuned Pseudo-Huber loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate (mu, tau) from a file with one observation per line.
    Estimate(EstimateArgs),
    /// Solve for the population oracle tau_star of a noise law.
    Oracle(OracleArgs),
    /// Write a seeded sample y_i = mu + sigma * eps_i, one value per line.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study described by a key=value spec file.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Overrides z = 5 sqrt(log(5/delta)).
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub noise: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, conflicts_with = "z")]
    pub delta: Option<f64>,
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub noise: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn failure(message: impl Into<String>) -> Self {
        CliError { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Quadrature { .. } => EXIT_FAILURE,
            _ => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments and dispatches. Never panics on malformed input.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    let res = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, out, err),
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Study(a) => cmd_study(&a, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Parses one decimal literal per line; blank lines and `#` comments are
/// skipped. Errors name the 1-based line.
pub fn parse_data(text: &str) -> CliResult<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => return Err(CliError::usage(format!("line {}: cannot parse '{}' as a finite number", i + 1, t))),
        }
    }
    if values.is_empty() {
        return Err(CliError::usage("input contains no observations"));
    }
    Ok(values)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Formats with 12 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

fn canonical_json(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn check_delta_z(delta: Option<f64>, z: Option<f64>) -> CliResult<f64> {
    if let Some(z) = z {
        if !(z > 0.0 && z.is_finite()) {
            return Err(CliError::usage(format!("--z must be positive, got {z}")));
        }
        return Ok(z);
    }
    let delta = delta.unwrap_or(0.05);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::usage(format!("--delta must lie in (0, 1), got {delta}")));
    }
    Ok(z_from_delta(delta))
}

pub fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let z = check_delta_z(Some(a.delta), a.z)?;
    let values = parse_data(&read_text(&a.input)?)?;
    let n = values.len();
    let data = Sample::new(values)?;
    let config = EstimatorConfig { delta: a.delta, z_override: Some(z), ..Default::default() };
    let res = fit(&data, &config).map_err(|e| match e {
        Error::Config(_) | Error::Domain(_) => CliError::usage(e.to_string()),
        other => CliError::failure(other.to_string()),
    })?;
    let warnings: Vec<String> = res.warnings.iter().map(|w| w.to_string()).collect();
    match a.format {
        Format::Json => {
            let v = json!({
                "mu_hat": res.mu_hat,
                "tau_hat": res.tau_hat,
                "z": res.z,
                "n": n,
                "iterations": res.iterations,
                "grad_norm": res.grad_norm,
                "converged": res.converged,
                "degenerate": res.degenerate,
                "warnings": warnings,
            });
            writeln!(out, "{}", canonical_json(&v)).ok();
        }
        Format::Text => {
            writeln!(out, "mu_hat      {}", fmt_sig(res.mu_hat)).ok();
            writeln!(out, "tau_hat     {}", fmt_sig(res.tau_hat)).ok();
            writeln!(out, "z           {}", fmt_sig(res.z)).ok();
            writeln!(out, "n           {n}").ok();
            writeln!(out, "iterations  {}", res.iterations).ok();
            writeln!(out, "converged   {}", res.converged).ok();
            writeln!(out, "degenerate  {}", res.degenerate).ok();
            for w in &warnings {
                writeln!(err, "warning: {w}").ok();
            }
        }
    }
    Ok(if res.converged { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> CliResult<i32> {
    let z = check_delta_z(a.delta, a.z)?;
    let noise: NoiseModel = a.noise.parse()?;
    if !(a.sigma > 0.0 && a.sigma.is_finite()) {
        return Err(CliError::usage(format!("--sigma must be positive, got {}", a.sigma)));
    }
    let sol = tau_star(&noise, a.sigma, a.n, z)?;
    let bounds_hold = sol.bounds_hold(1e-6);
    match a.format {
        Format::Json => {
            let mut v = serde_json::to_value(sol).expect("serializable");
            v["bounds_hold"] = json!(bounds_hold);
            v["noise"] = json!(noise.to_string());
            writeln!(out, "{}", canonical_json(&v)).ok();
        }
        Format::Text => {
            writeln!(out, "tau_star           {}", fmt_sig(sol.tau_star)).ok();
            writeln!(out, "sigma_tau_star_sq  {}", fmt_sig(sol.sigma_tau_star_sq)).ok();
            writeln!(out, "lower_bound_sq     {}", fmt_sig(sol.lower_bound_sq)).ok();
            writeln!(out, "upper_bound_sq     {}", fmt_sig(sol.upper_bound_sq)).ok();
            writeln!(out, "residual           {}", fmt_sig(sol.residual)).ok();
            writeln!(out, "bounds_hold        {bounds_hold}").ok();
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<i32> {
    let noise: NoiseModel = a.noise.parse()?;
    let data = sample(&noise, a.sigma, a.n, a.mu, a.seed)?;
    let mut text = String::with_capacity(24 * a.n);
    for v in data.values() {
        text.push_str(&format!("{v}\n"));
    }
    write_text(&a.out, &text)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Deviation,
    TauAdaptivity,
}

/// Parses the flat `key = value` study file. Recognized keys: `noise`,
/// `sigma`, `mu`, `n_grid`, `delta`, `z`, `replications`, `seed`,
/// `estimators`, `study` (`deviation` or `tau_adaptivity`).
pub fn parse_study_spec(text: &str) -> CliResult<(StudySpec, StudyKind)> {
    let mut noise = None;
    let mut n_grid = None;
    let mut replications = None;
    let mut sigma = 1.0;
    let mut mu = 0.0;
    let mut delta = 0.05;
    let mut z = None;
    let mut seed = 0u64;
    let mut estimators = vec![Estimator::PenalizedPh, Estimator::SampleMean];
    let mut kind = StudyKind::Deviation;

    fn bad(key: &str, value: &str) -> CliError {
        CliError::usage(format!("invalid value '{value}' for key '{key}'"))
    }
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
        value.parse().map_err(|_| bad(key, value))
    }

    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("line {}: expected key=value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "noise" => {
                noise = Some(
                    value
                        .parse::<NoiseModel>()
                        .map_err(|e| CliError::usage(format!("invalid value for key 'noise': {e}")))?,
                )
            }
            "sigma" => sigma = num(key, value)?,
            "mu" => mu = num(key, value)?,
            "delta" => delta = num(key, value)?,
            "z" => z = Some(num(key, value)?),
            "replications" => replications = Some(num(key, value)?),
            "seed" => seed = num(key, value)?,
            "n_grid" => {
                let grid = value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad(key, value))?;
                n_grid = Some(grid);
            }
            "estimators" => {
                estimators = value
                    .split(',')
                    .map(|v| v.parse::<Estimator>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad(key, value))?;
            }
            "study" => {
                kind = match value {
                    "deviation" => StudyKind::Deviation,
                    "tau_adaptivity" => StudyKind::TauAdaptivity,
                    _ => return Err(bad(key, value)),
                }
            }
            other => return Err(CliError::usage(format!("unknown key '{other}'"))),
        }
    }

    let missing = |k: &str| CliError::usage(format!("missing required key '{k}'"));
    let spec = StudySpec {
        noise: noise.ok_or_else(|| missing("noise"))?,
        sigma,
        mu_true: mu,
        n_grid: n_grid.ok_or_else(|| missing("n_grid"))?,
        delta,
        z_override: z,
        replications: replications.ok_or_else(|| missing("replications"))?,
        base_seed: seed,
        estimators,
    };
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok((spec, kind))
}

pub fn cmd_study(a: &StudyArgs, out: &mut dyn Write) -> CliResult<i32> {
    let (spec, kind) = parse_study_spec(&read_text(&a.spec)?)?;
    let res = match kind {
        StudyKind::Deviation => run_deviation_study(&spec)?,
        StudyKind::TauAdaptivity => run_tau_adaptivity_study(&spec)?,
    };
    write_text(&a.out_csv, &res.to_csv())?;
    write_text(&a.out_json, &res.to_json())?;
    writeln!(out, "wrote {} rows ({} failed fits)", res.rows.len(), res.failures).ok();
    Ok(if res.failures == 0 { EXIT_OK } else { EXIT_FAILURE })
}
