//! Baseline estimators and seeded Monte Carlo studies.
//!
//! Replications run in parallel; each one draws from its own generator seeded
//! by `derive_seed(base_seed, [n, r])`, and results are reduced in replication
//! order, so a study is a deterministic function of its [`StudySpec`].

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Sample;
use crate::noise::{derive_seed, sample, NoiseModel};
use crate::oracle::tau_star;
use crate::solver::{fit, fit_fixed_tau, EstimatorConfig};
use crate::stats::{median, median_sorted, ols_slope, quantile_sorted};

pub const QUANTILE_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

/// Stream tag separating the shuffle seed from the sampling seed.
const SHUFFLE_STREAM: u64 = 0x6d6f_6d73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    PenalizedPh,
    SampleMean,
    MedianOfMeans,
    FixedTauPh,
}

impl Estimator {
    pub const ALL: [Estimator; 4] =
        [Estimator::PenalizedPh, Estimator::SampleMean, Estimator::MedianOfMeans, Estimator::FixedTauPh];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::PenalizedPh => "penalized_ph",
            Estimator::SampleMean => "sample_mean",
            Estimator::MedianOfMeans => "median_of_means",
            Estimator::FixedTauPh => "fixed_tau_ph",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown estimator '{}'", s.trim())))
    }
}

pub fn sample_mean(data: &Sample) -> f64 {
    crate::stats::mean(data.values())
}

/// Default block count `ceil(log(1/delta))`.
pub fn default_blocks(delta: f64) -> usize {
    ((1.0 / delta).ln().ceil() as usize).max(1)
}

/// Median of block means. Blocks are contiguous slices of a seeded
/// permutation of the data; the first `n % blocks` blocks get one extra
/// element.
pub fn median_of_means(data: &Sample, blocks: usize, seed: u64) -> Result<f64> {
    let n = data.len();
    if blocks == 0 || blocks > n {
        return Err(Error::TooManyBlocks { blocks, n });
    }
    let mut v = data.values().to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(median_of_block_means(&v, blocks))
}

pub(crate) fn median_of_block_means(v: &[f64], blocks: usize) -> f64 {
    let n = v.len();
    let base = n / blocks;
    let extra = n % blocks;
    let mut means = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        let block = &v[start..start + len];
        means.push(block.iter().sum::<f64>() / len as f64);
        start += len;
    }
    median(&means)
}

/// Pseudo-Huber location with `tau = sigma_known sqrt(n) / z`, i.e. using the
/// true noise scale.
pub fn fixed_tau_ph(data: &Sample, sigma_known: f64, config: &EstimatorConfig) -> Result<f64> {
    if !(sigma_known > 0.0 && sigma_known.is_finite()) {
        return Err(Error::domain(format!("sigma_known must be positive, got {sigma_known}")));
    }
    let tau = sigma_known * (data.len() as f64).sqrt() / config.z();
    fit_fixed_tau(data, tau, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub noise: NoiseModel,
    pub sigma: f64,
    pub mu_true: f64,
    pub n_grid: Vec<usize>,
    pub delta: f64,
    pub z_override: Option<f64>,
    pub replications: usize,
    pub base_seed: u64,
    pub estimators: Vec<Estimator>,
}

impl StudySpec {
    pub fn new(noise: NoiseModel, n_grid: Vec<usize>, replications: usize) -> Self {
        StudySpec {
            noise,
            sigma: 1.0,
            mu_true: 0.0,
            n_grid,
            delta: 0.05,
            z_override: None,
            replications,
            base_seed: 0,
            estimators: vec![Estimator::PenalizedPh, Estimator::SampleMean],
        }
    }

    pub fn config(&self) -> EstimatorConfig {
        EstimatorConfig { delta: self.delta, z_override: self.z_override, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must be a nonempty list of positive integers".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be nonempty".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.mu_true.is_finite() {
            return Err(Error::Config(format!("mu must be finite, got {}", self.mu_true)));
        }
        self.config().validate()
    }
}

/// One row per (estimator, n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub estimator: Estimator,
    pub n: usize,
    pub q50: f64,
    pub q90: f64,
    pub q95: f64,
    pub q99: f64,
    /// penalized_ph only.
    pub median_tau_hat: Option<f64>,
    /// penalized_ph only, when the oracle is defined (`n > z^2`).
    pub tau_star: Option<f64>,
    /// Fraction of replications with `tau_hat` in `[2 tau_star / 5, 5 tau_star]`.
    pub coverage: Option<f64>,
    pub median_ratio: Option<f64>,
    /// Log-log slope of median `tau_hat` against `n` (same for every row).
    pub slope: Option<f64>,
    /// Replications whose fit did not converge.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub noise: String,
    pub sigma: f64,
    pub mu_true: f64,
    pub delta: f64,
    pub z: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub rows: Vec<StudyRow>,
    pub failures: usize,
}

impl StudyResult {
    pub fn row(&self, estimator: Estimator, n: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.n == n)
    }

    pub const CSV_HEADER: &'static str = "estimator,n,q50,q90,q95,q99,median_tau_hat,tau_star,coverage,slope";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.estimator,
                r.n,
                r.q50,
                r.q90,
                r.q95,
                r.q99,
                opt(r.median_tau_hat),
                opt(r.tau_star),
                opt(r.coverage),
                opt(r.slope)
            ));
        }
        out
    }

    /// Canonical JSON: serializing through `serde_json::Value` sorts keys, so a
    /// parse and re-serialize reproduces the same bytes.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("serializable");
        serde_json::to_string_pretty(&v).expect("serializable")
    }
}

/// Per-replication output: deviation for each requested estimator, plus
/// `tau_hat` and the convergence flag for the penalized fit.
struct Replication {
    deviations: Vec<f64>,
    tau_hat: Option<f64>,
    failed: bool,
}

fn run_replication(spec: &StudySpec, cfg: &EstimatorConfig, n: usize, r: usize) -> Result<Replication> {
    let seed = derive_seed(spec.base_seed, &[n as u64, r as u64]);
    let data = sample(&spec.noise, spec.sigma, n, spec.mu_true, seed)?;
    let mut deviations = Vec::with_capacity(spec.estimators.len());
    let mut tau_hat = None;
    let mut failed = false;
    for est in &spec.estimators {
        let mu = match est {
            Estimator::PenalizedPh => {
                let f = fit(&data, cfg)?;
                tau_hat = Some(f.tau_hat);
                failed |= !f.converged;
                f.mu_hat
            }
            Estimator::SampleMean => sample_mean(&data),
            Estimator::MedianOfMeans => {
                let blocks = default_blocks(spec.delta).min(n);
                median_of_means(&data, blocks, derive_seed(seed, &[SHUFFLE_STREAM]))?
            }
            Estimator::FixedTauPh => fixed_tau_ph(&data, spec.sigma, cfg)?,
        };
        deviations.push((mu - spec.mu_true).abs());
    }
    Ok(Replication { deviations, tau_hat, failed })
}

fn run_study(spec: &StudySpec, require_oracle: bool) -> Result<StudyResult> {
    spec.validate()?;
    let cfg = spec.config();
    let z = cfg.z();
    if require_oracle {
        if let Some(&n) = spec.n_grid.iter().find(|&&n| (n as f64) <= z * z) {
            return Err(Error::OracleUndefined { n, z_sq: z * z });
        }
    }

    let mut rows = Vec::new();
    let mut total_failures = 0;
    let mut median_taus: Vec<(usize, f64)> = Vec::new();
    for &n in &spec.n_grid {
        let reps: Vec<Replication> = (0..spec.replications)
            .into_par_iter()
            .map(|r| run_replication(spec, &cfg, n, r))
            .collect::<Result<Vec<_>>>()?;
        let failures = reps.iter().filter(|r| r.failed).count();
        total_failures += failures;

        let taus: Vec<f64> = reps.iter().filter_map(|r| r.tau_hat).collect();
        let oracle = if !taus.is_empty() && (n as f64) > z * z {
            Some(tau_star(&spec.noise, spec.sigma, n, z)?.tau_star)
        } else {
            None
        };
        let median_tau = if taus.is_empty() {
            None
        } else {
            let mut t = taus.clone();
            t.sort_by(f64::total_cmp);
            Some(median_sorted(&t))
        };
        if let Some(m) = median_tau {
            median_taus.push((n, m));
        }

        for (j, &est) in spec.estimators.iter().enumerate() {
            let mut dev: Vec<f64> = reps.iter().map(|r| r.deviations[j]).collect();
            dev.sort_by(f64::total_cmp);
            let q = QUANTILE_LEVELS.map(|l| quantile_sorted(&dev, l));
            let ph = est == Estimator::PenalizedPh;
            let coverage = match (ph, oracle) {
                (true, Some(ts)) => {
                    let inside = taus.iter().filter(|&&t| t >= 0.4 * ts && t <= 5.0 * ts).count();
                    Some(inside as f64 / taus.len() as f64)
                }
                _ => None,
            };
            rows.push(StudyRow {
                estimator: est,
                n,
                q50: q[0],
                q90: q[1],
                q95: q[2],
                q99: q[3],
                median_tau_hat: if ph { median_tau } else { None },
                tau_star: if ph { oracle } else { None },
                coverage,
                median_ratio: match (ph, median_tau, oracle) {
                    (true, Some(m), Some(ts)) => Some(m / ts),
                    _ => None,
                },
                slope: None,
                failures: if ph { failures } else { 0 },
            });
        }
    }

    if median_taus.len() >= 2 {
        let x: Vec<f64> = median_taus.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let y: Vec<f64> = median_taus.iter().map(|(_, t)| t.ln()).collect();
        let slope = ols_slope(&x, &y);
        for r in rows.iter_mut().filter(|r| r.estimator == Estimator::PenalizedPh) {
            r.slope = Some(slope);
        }
    }

    Ok(StudyResult {
        noise: spec.noise.to_string(),
        sigma: spec.sigma,
        mu_true: spec.mu_true,
        delta: spec.delta,
        z,
        replications: spec.replications,
        base_seed: spec.base_seed,
        rows,
        failures: total_failures,
    })
}

/// Deviation quantiles of `|mu_hat - mu_true|` for each requested estimator
/// and sample size. `tau` statistics are filled in where the oracle exists.
pub fn run_deviation_study(spec: &StudySpec) -> Result<StudyResult> {
    run_study(spec, false)
}

/// `tau_hat` against the population oracle: coverage of
/// `[2 tau_star / 5, 5 tau_star]`, median ratio, and the log-log slope in `n`.
/// Only the penalized estimator is run; every `n` must exceed `z^2`.
pub fn run_tau_adaptivity_study(spec: &StudySpec) -> Result<StudyResult> {
    let spec = StudySpec { estimators: vec![Estimator::PenalizedPh], ..spec.clone() };
    run_study(&spec, true)
}
