//! Penalized Pseudo-Huber loss and its derivatives.
//!
//! Per observation, with residual `x = y - mu`,
//!
//! ```text
//! l(x, tau) = sqrt(n) (sqrt(tau^2 + x^2) - tau) / z + z tau / sqrt(n)
//! ```
//!
//! and the empirical objective is `L_n(mu, tau) = mean_i l(y_i - mu, tau)`.
//! Every function here is pure; nothing is cached between calls.

use crate::error::{Error, Result};

/// Observations `y_1..y_n`: non-empty, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Sample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; a `Sample` holds at least one value.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every observation equals the first one.
    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v == first)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

/// An evaluation point `(mu, tau)` together with the adjustment factor `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub mu: f64,
    pub tau: f64,
    pub z: f64,
}

impl LossPoint {
    pub fn new(mu: f64, tau: f64, z: f64) -> Result<Self> {
        let p = LossPoint { mu, tau, z };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        check_tau_z(self.tau, self.z)?;
        if !self.mu.is_finite() {
            return Err(Error::domain(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }
}

fn check_tau_z(tau: f64, z: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be positive and finite, got {tau}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("z must be positive and finite, got {z}")));
    }
    Ok(())
}

/// Second partials of `L_n`. Symmetric by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian2x2 {
    pub d_mumu: f64,
    pub d_mutau: f64,
    pub d_tautau: f64,
    det: f64,
}

impl Hessian2x2 {
    pub fn new(d_mumu: f64, d_mutau: f64, d_tautau: f64) -> Self {
        let det = d_mumu * d_tautau - d_mutau * d_mutau;
        Hessian2x2 { d_mumu, d_mutau, d_tautau, det }
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn trace(&self) -> f64 {
        self.d_mumu + self.d_tautau
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let half_tr = 0.5 * self.trace();
        let half_gap = 0.5 * (self.d_mumu - self.d_tautau);
        half_tr + half_gap.hypot(self.d_mutau)
    }

    /// Smallest eigenvalue, computed as `det / lambda_max` to avoid the
    /// cancellation in `tr/2 - sqrt(...)`.
    pub fn min_eigenvalue(&self) -> f64 {
        let lmax = self.max_eigenvalue();
        if lmax <= 0.0 {
            let half_tr = 0.5 * self.trace();
            let half_gap = 0.5 * (self.d_mumu - self.d_tautau);
            return half_tr - half_gap.hypot(self.d_mutau);
        }
        self.det / lmax
    }
}

/// `sqrt(tau^2 + x^2) - tau` without cancellation for small `|x|` and without
/// overflow for huge `|x|`.
#[inline]
pub(crate) fn excess(x: f64, tau: f64) -> f64 {
    let h = tau.hypot(x);
    if x.abs() <= tau {
        x * x / (h + tau)
    } else {
        h - tau
    }
}

/// Penalized Pseudo-Huber loss of a single residual.
pub fn pointwise_loss(x: f64, tau: f64, n: usize, z: f64) -> Result<f64> {
    check_tau_z(tau, z)?;
    if !x.is_finite() {
        return Err(Error::domain(format!("residual must be finite, got {x}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let sn = (n as f64).sqrt();
    Ok(sn * excess(x, tau) / z + z * tau / sn)
}

/// `L_n(mu, tau)`.
pub fn total_loss(data: &Sample, point: LossPoint) -> Result<f64> {
    point.validate()?;
    Ok(loss_unchecked(data.values(), point.mu, point.tau, point.z))
}

/// `dL_n / dmu`.
pub fn grad_mu(data: &Sample, point: LossPoint) -> Result<f64> {
    point.validate()?;
    Ok(grad_mu_unchecked(data.values(), point.mu, point.tau, point.z))
}

/// `dL_n / dtau`.
pub fn grad_tau(data: &Sample, point: LossPoint) -> Result<f64> {
    point.validate()?;
    Ok(grad_tau_unchecked(data.values(), point.mu, point.tau, point.z))
}

pub fn hessian(data: &Sample, point: LossPoint) -> Result<Hessian2x2> {
    point.validate()?;
    Ok(hessian_unchecked(data.values(), point.mu, point.tau, point.z))
}

// The unchecked kernels below assume tau > 0, z > 0 and finite inputs. The
// solver calls them in its inner loops after validating once.

pub(crate) fn loss_unchecked(y: &[f64], mu: f64, tau: f64, z: f64) -> f64 {
    let sn = (y.len() as f64).sqrt();
    let s: f64 = y.iter().map(|&yi| excess(yi - mu, tau)).sum();
    s / (z * sn) + z * tau / sn
}

pub(crate) fn grad_mu_unchecked(y: &[f64], mu: f64, tau: f64, z: f64) -> f64 {
    let sn = (y.len() as f64).sqrt();
    let s: f64 = y
        .iter()
        .map(|&yi| {
            let r = yi - mu;
            r / tau.hypot(r)
        })
        .sum();
    -s / (z * sn)
}

/// Written as `z/sqrt(n) - (1/(z sqrt(n))) sum (1 - tau/h_i)`, which equals the
/// textbook form but keeps full precision when `tau` dominates the residuals.
pub(crate) fn grad_tau_unchecked(y: &[f64], mu: f64, tau: f64, z: f64) -> f64 {
    let sn = (y.len() as f64).sqrt();
    let s: f64 = y
        .iter()
        .map(|&yi| {
            let r = yi - mu;
            excess(r, tau) / tau.hypot(r)
        })
        .sum();
    z / sn - s / (z * sn)
}

pub(crate) fn hessian_unchecked(y: &[f64], mu: f64, tau: f64, z: f64) -> Hessian2x2 {
    let sn = (y.len() as f64).sqrt();
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    // weights w_i = 1/h_i^3, used below for the determinant
    let mut w_sum = 0.0;
    let mut wr_sum = 0.0;
    for &yi in y {
        let r = yi - mu;
        let h = tau.hypot(r);
        let ct = tau / h;
        let cr = r / h;
        a += ct * ct / h;
        b += ct * cr / h;
        d += cr * cr / h;
        let w = 1.0 / (h * h * h);
        w_sum += w;
        wr_sum += w * r;
    }
    let c = 1.0 / (z * sn);
    let mut hess = Hessian2x2::new(a * c, b * c, d * c);

    // det = c^2 tau^2 sum_{i<j} w_i w_j (r_i - r_j)^2 = c^2 tau^2 W sum_i w_i (r_i - rbar)^2
    if w_sum.is_finite() && w_sum > 0.0 {
        let rbar = wr_sum / w_sum;
        let spread: f64 = y
            .iter()
            .map(|&yi| {
                let r = yi - mu;
                let h = tau.hypot(r);
                let dr = r - rbar;
                dr * dr / (h * h * h)
            })
            .sum();
        let det = c * c * tau * tau * w_sum * spread;
        if det.is_finite() {
            hess.det = det;
        }
    }
    hess
}
