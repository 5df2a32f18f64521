//! Joint minimization of `L_n(mu, tau)`.
//!
//! Two strategies reach the same optimum:
//!
//! - [`Strategy::Agd`]: alternating gradient descent. Each iteration takes a
//!   projected gradient step in `tau` and then a gradient step in `mu` at the
//!   new `tau`. Step sizes come from an Armijo backtracking search run
//!   separately per coordinate.
//! - [`Strategy::ExactCoordinate`]: alternating exact 1-D minimizations, each
//!   done by bisection on the sign of the partial derivative. Slower, but it
//!   relies only on monotonicity of the partials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{grad_mu_unchecked, grad_tau_unchecked, hessian_unchecked, loss_unchecked, Sample};
use crate::stats::{mad, median, robust_scale, MAD_SCALE};

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const GROW: f64 = 2.0;
const MAX_BACKTRACKS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Agd,
    ExactCoordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// `mu0 = median`, `tau0 = max(1.4826 MAD, tau_floor) sqrt(n) / z`.
    MedianMad,
    User { mu0: f64, tau0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Confidence parameter; sets `z = 5 sqrt(log(5/delta))` unless overridden.
    pub delta: f64,
    pub z_override: Option<f64>,
    /// Stationarity tolerance on the (dimensionless) gradient.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Lower bound on `tau`. `None` means `1e-8` times the robust data scale.
    pub tau_floor: Option<f64>,
    pub strategy: Strategy,
    pub init: InitPolicy,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            delta: 0.05,
            z_override: None,
            grad_tol: 1e-10,
            max_iters: 100_000,
            tau_floor: None,
            strategy: Strategy::Agd,
            init: InitPolicy::MedianMad,
        }
    }
}

/// `z = 5 sqrt(log(5 / delta))`.
pub fn z_from_delta(delta: f64) -> f64 {
    5.0 * (5.0 / delta).ln().sqrt()
}

impl EstimatorConfig {
    pub fn with_delta(delta: f64) -> Self {
        EstimatorConfig { delta, ..Default::default() }
    }

    pub fn with_z(z: f64) -> Self {
        EstimatorConfig { z_override: Some(z), ..Default::default() }
    }

    pub fn strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn init(mut self, init: InitPolicy) -> Self {
        self.init = init;
        self
    }

    pub fn z(&self) -> f64 {
        self.z_override.unwrap_or_else(|| z_from_delta(self.delta))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(z) = self.z_override {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::Config(format!("z must be positive, got {z}")));
            }
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if let Some(f) = self.tau_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("tau_floor must be positive, got {f}")));
            }
        }
        if let InitPolicy::User { mu0, tau0 } = self.init {
            if !mu0.is_finite() || !(tau0 > 0.0 && tau0.is_finite()) {
                return Err(Error::Config(format!("invalid initial point ({mu0}, {tau0})")));
            }
        }
        Ok(())
    }

    fn tau_floor_for(&self, scale: f64) -> f64 {
        self.tau_floor.unwrap_or(1e-8 * scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// `n < z^2`: the penalty coefficient `sqrt(n)/z - z/sqrt(n)` is not
    /// positive and `tau_hat` is pushed to the floor.
    SmallSample { n: usize, z_sq: f64 },
    /// All observations equal; the fit is `(value, tau_floor)`.
    Degenerate,
    /// Iteration cap reached before the gradient tolerance.
    NotConverged,
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::SmallSample { n, z_sq } => {
                write!(f, "n = {n} is below z^2 = {z_sq:.4}; penalty coefficient is not positive")
            }
            FitWarning::Degenerate => write!(f, "all observations are identical; tau_hat set to the floor"),
            FitWarning::NotConverged => write!(f, "iteration cap reached before convergence"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mu_hat: f64,
    pub tau_hat: f64,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at exit.
    pub grad_norm: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub z: f64,
    pub tau_floor: f64,
    pub warnings: Vec<FitWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub stationarity_mu: f64,
    pub stationarity_tau: f64,
    /// Smallest `d^2 L_n / dmu^2` over a 64-point grid on the ball around `mu_hat`.
    pub empirical_kappa: f64,
    pub ball_radius: f64,
    /// Set when the fit was degenerate; `empirical_kappa` is then taken at the floor.
    pub degenerate: bool,
}

/// Problem data shared by both strategies.
struct Problem<'a> {
    y: &'a [f64],
    z: f64,
    floor: f64,
    tol: f64,
    lo: f64,
    hi: f64,
    span: f64,
}

impl Problem<'_> {
    fn loss(&self, mu: f64, tau: f64) -> f64 {
        loss_unchecked(self.y, mu, tau, self.z)
    }

    fn g_mu(&self, mu: f64, tau: f64) -> f64 {
        grad_mu_unchecked(self.y, mu, tau, self.z)
    }

    fn g_tau(&self, mu: f64, tau: f64) -> f64 {
        grad_tau_unchecked(self.y, mu, tau, self.z)
    }

    /// Gradient in `tau` with the floor constraint projected out.
    fn pg_tau(&self, mu: f64, tau: f64) -> f64 {
        let g = self.g_tau(mu, tau);
        if tau <= self.floor && g > 0.0 {
            0.0
        } else {
            g
        }
    }

    fn grad_norm(&self, mu: f64, tau: f64) -> f64 {
        self.g_mu(mu, tau).abs().max(self.pg_tau(mu, tau).abs())
    }

    /// Stationary to floating-point resolution: each free coordinate is either
    /// within tolerance or has partials of opposite sign at its two
    /// neighbouring floats.
    fn resolution_limited(&self, mu: f64, tau: f64) -> bool {
        let mu_ok = self.g_mu(mu, tau).abs() <= self.tol
            || (self.g_mu(mu.next_down(), tau) <= 0.0 && self.g_mu(mu.next_up(), tau) >= 0.0);
        let tau_ok = self.pg_tau(mu, tau).abs() <= self.tol
            || (self.g_tau(mu, tau.next_down()) <= 0.0 && self.g_tau(mu, tau.next_up()) >= 0.0);
        mu_ok && tau_ok
    }

    fn stopped(&self, mu: f64, tau: f64) -> bool {
        self.grad_norm(mu, tau) <= self.tol || self.resolution_limited(mu, tau)
    }

    /// Loss differences below this are indistinguishable from rounding.
    fn loss_noise(&self, value: f64) -> f64 {
        64.0 * f64::EPSILON * value.abs().max(f64::MIN_POSITIVE)
    }

    /// Root of `d/dmu L_n(., tau)` on `[min y, max y]`.
    fn argmin_mu(&self, tau: f64) -> f64 {
        let (mut lo, mut hi) = (self.lo, self.hi);
        let width_tol = 1e-17 * self.span;
        for _ in 0..4096 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= width_tol {
                break;
            }
            let g = self.g_mu(mid, tau);
            if g == 0.0 {
                return mid;
            }
            if g < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (glo, ghi) = (self.g_mu(lo, tau).abs(), self.g_mu(hi, tau).abs());
        if glo <= ghi {
            lo
        } else {
            hi
        }
    }

    /// Minimizer of `L_n(mu, .)` on `[floor, inf)`.
    fn argmin_tau(&self, mu: f64, start: f64) -> f64 {
        if self.g_tau(mu, self.floor) >= 0.0 {
            return self.floor;
        }
        let mut lo = self.floor;
        let mut hi = start.max(self.floor) * 2.0;
        while self.g_tau(mu, hi) <= 0.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return lo;
            }
        }
        for _ in 0..4096 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let g = self.g_tau(mu, mid);
            if g == 0.0 {
                return mid;
            }
            if g < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if self.g_tau(mu, lo).abs() <= self.g_tau(mu, hi).abs() {
            lo
        } else {
            hi
        }
    }
}

/// One backtracking search along `-g` for a single coordinate of a convex
/// function. Returns `(new_x, new_value, accepted_step)`; `new_x == x` when no
/// step could be accepted.
///
/// Acceptance: the Armijo condition while the loss change is measurable. Once
/// it is within rounding noise the function values carry no information, and a
/// derivative test takes over: the step is kept if it stays on the near side of
/// the 1-D minimizer (`g * g_new >= 0`) or overshoots it by no more than half
/// (`|g_new| <= |g| / 2`).
#[allow(clippy::too_many_arguments)]
fn backtrack(
    x: f64,
    value: f64,
    g: f64,
    step0: f64,
    lower: f64,
    noise: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> (f64, f64, f64) {
    let mut step = step0;
    for _ in 0..MAX_BACKTRACKS {
        let cand = (x - step * g).max(lower);
        if cand == x {
            break;
        }
        let fc = f(cand);
        let decrease = value - fc;
        if decrease.abs() > noise {
            if decrease >= ARMIJO_C * g * (x - cand) {
                return (cand, fc, step);
            }
        } else {
            let gc = df(cand);
            if g * gc >= 0.0 || gc.abs() <= 0.5 * g.abs() {
                return (cand, fc, step);
            }
        }
        step *= SHRINK;
    }
    (x, value, step)
}

fn initial_point(data: &[f64], config: &EstimatorConfig, z: f64, floor: f64) -> (f64, f64) {
    match config.init {
        InitPolicy::MedianMad => {
            let n = data.len() as f64;
            let s = (MAD_SCALE * mad(data)).max(floor);
            (median(data), s * n.sqrt() / z)
        }
        InitPolicy::User { mu0, tau0 } => (mu0, tau0.max(floor)),
    }
}

/// Every `(mu_k, tau_k, L_n)` visited by the AGD strategy, for auditing descent.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub points: Vec<(f64, f64, f64)>,
}

fn agd(p: &Problem, mu0: f64, tau0: f64, max_iters: usize, scale: f64, mut trace: Option<&mut Trace>) -> (f64, f64, usize, bool) {
    let (mut mu, mut tau) = (mu0, tau0.max(p.floor));
    let mut value = p.loss(mu, tau);
    let mut eta_mu = scale;
    let mut eta_tau = scale;
    if let Some(t) = trace.as_deref_mut() {
        t.points.push((mu, tau, value));
    }
    for k in 0..max_iters {
        if p.grad_norm(mu, tau) <= p.tol {
            return (mu, tau, k, true);
        }

        let g_tau = p.pg_tau(mu, tau);
        let mut moved = false;
        if g_tau != 0.0 {
            let (t_new, v_new, step) = backtrack(
                tau,
                value,
                g_tau,
                eta_tau * GROW,
                p.floor,
                p.loss_noise(value),
                |t| p.loss(mu, t),
                |t| p.g_tau(mu, t),
            );
            moved |= t_new != tau;
            tau = t_new;
            value = v_new;
            eta_tau = step;
        }

        let g_mu = p.g_mu(mu, tau);
        if g_mu != 0.0 {
            let (m_new, v_new, step) = backtrack(
                mu,
                value,
                g_mu,
                eta_mu * GROW,
                f64::NEG_INFINITY,
                p.loss_noise(value),
                |m| p.loss(m, tau),
                |m| p.g_mu(m, tau),
            );
            moved |= m_new != mu;
            mu = m_new;
            value = v_new;
            eta_mu = step;
        }

        if let Some(t) = trace.as_deref_mut() {
            t.points.push((mu, tau, value));
        }
        if !moved {
            // no representable step decreases the loss further
            return (mu, tau, k + 1, p.stopped(mu, tau));
        }
    }
    (mu, tau, max_iters, p.stopped(mu, tau))
}

fn exact_coordinate(p: &Problem, mu0: f64, tau0: f64, max_iters: usize) -> (f64, f64, usize, bool) {
    let (mut mu, mut tau) = (mu0, tau0.max(p.floor));
    for k in 0..max_iters {
        if p.grad_norm(mu, tau) <= p.tol {
            return (mu, tau, k, true);
        }
        let mu_new = p.argmin_mu(tau);
        let tau_new = p.argmin_tau(mu_new, tau);
        if mu_new == mu && tau_new == tau {
            return (mu, tau, k + 1, p.stopped(mu, tau));
        }
        mu = mu_new;
        tau = tau_new;
    }
    (mu, tau, max_iters, p.stopped(mu, tau))
}

fn prepare<'a>(data: &'a Sample, config: &EstimatorConfig) -> Result<(Problem<'a>, f64)> {
    config.validate()?;
    let y = data.values();
    let scale = robust_scale(y);
    let floor = config.tau_floor_for(scale);
    let (lo, hi) = (data.min(), data.max());
    let p = Problem { y, z: config.z(), floor, tol: config.grad_tol, lo, hi, span: hi - lo };
    Ok((p, scale))
}

fn degenerate_fit(data: &Sample, p: &Problem, warnings: Vec<FitWarning>) -> FitResult {
    let mut warnings = warnings;
    warnings.push(FitWarning::Degenerate);
    FitResult {
        mu_hat: data.values()[0],
        tau_hat: p.floor,
        iterations: 0,
        grad_norm: 0.0,
        converged: true,
        degenerate: true,
        z: p.z,
        tau_floor: p.floor,
        warnings,
    }
}

/// Jointly minimizes `L_n` over `(mu, tau)`.
pub fn fit(data: &Sample, config: &EstimatorConfig) -> Result<FitResult> {
    fit_impl(data, config, None)
}

/// [`fit`] with the AGD path recorded.
pub fn fit_traced(data: &Sample, config: &EstimatorConfig) -> Result<(FitResult, Trace)> {
    let mut trace = Trace::default();
    let res = fit_impl(data, &config.strategy(Strategy::Agd), Some(&mut trace))?;
    Ok((res, trace))
}

fn fit_impl(data: &Sample, config: &EstimatorConfig, trace: Option<&mut Trace>) -> Result<FitResult> {
    let (p, scale) = prepare(data, config)?;
    let n = data.len();
    let mut warnings = Vec::new();
    let z_sq = p.z * p.z;
    if (n as f64) < z_sq {
        log::warn!("n = {n} < z^2 = {z_sq:.4}; penalty coefficient is not positive");
        warnings.push(FitWarning::SmallSample { n, z_sq });
    }
    if data.is_constant() {
        return Ok(degenerate_fit(data, &p, warnings));
    }

    let (mu0, tau0) = initial_point(data.values(), config, p.z, p.floor);
    let (mu, tau, iterations, converged) = match config.strategy {
        Strategy::Agd => agd(&p, mu0, tau0, config.max_iters, scale, trace),
        Strategy::ExactCoordinate => exact_coordinate(&p, mu0, tau0, config.max_iters),
    };
    if !converged {
        log::warn!("solver stopped after {iterations} iterations without meeting grad_tol");
        warnings.push(FitWarning::NotConverged);
    }
    Ok(FitResult {
        mu_hat: mu,
        tau_hat: tau,
        iterations,
        grad_norm: p.grad_norm(mu, tau),
        converged,
        degenerate: false,
        z: p.z,
        tau_floor: p.floor,
        warnings,
    })
}

/// Profile minimizer `mu_hat(tau)` of `L_n(., tau)`.
pub fn fit_fixed_tau(data: &Sample, tau: f64, config: &EstimatorConfig) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be positive and finite, got {tau}")));
    }
    let (p, _) = prepare(data, config)?;
    if data.is_constant() {
        return Ok(data.values()[0]);
    }
    Ok(p.argmin_mu(tau))
}

/// `dL_n/dtau` at `(mu_hat(tau), tau)`, which by the envelope theorem is the
/// derivative of the profile loss `tau -> L_n(mu_hat(tau), tau)`.
pub fn profile_tau_gradient(data: &Sample, tau: f64, config: &EstimatorConfig) -> Result<f64> {
    let mu = fit_fixed_tau(data, tau, config)?;
    Ok(grad_tau_unchecked(data.values(), mu, tau, config.z()))
}

/// Recomputes stationarity and audits local strong convexity in `mu`.
pub fn diagnostics(data: &Sample, fit: &FitResult, radius: f64) -> Result<DiagnosticsReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::domain(format!("radius must be positive, got {radius}")));
    }
    if !(fit.tau_hat > 0.0) {
        return Err(Error::domain("fit has non-positive tau_hat"));
    }
    let y = data.values();
    let (mu, tau, z) = (fit.mu_hat, fit.tau_hat, fit.z);
    const GRID: usize = 64;
    let kappa = (0..GRID)
        .map(|i| {
            let m = mu - radius + 2.0 * radius * i as f64 / (GRID - 1) as f64;
            hessian_unchecked(y, m, tau, z).d_mumu
        })
        .fold(f64::INFINITY, f64::min);
    Ok(DiagnosticsReport {
        stationarity_mu: grad_mu_unchecked(y, mu, tau, z),
        stationarity_tau: grad_tau_unchecked(y, mu, tau, z),
        empirical_kappa: kappa,
        ball_radius: radius,
        degenerate: fit.degenerate,
    })
}
