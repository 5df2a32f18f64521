//! Population quantities for a known noise law.
//!
//! The population oracle `tau_star` minimizes `E L_n(mu_star, tau)` and solves
//!
//! ```text
//! E[ tau / sqrt(tau^2 + sigma^2 eps^2) ] = 1 - z^2 / n.
//! ```
//!
//! Internally the complement `E[1 - tau / sqrt(tau^2 + sigma^2 eps^2)] = z^2/n`
//! is solved instead; it keeps full relative precision when `z^2/n` is small.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::excess;
use crate::noise::NoiseModel;
use crate::quadrature::{integrate, Tolerance};

/// Beyond `|eps| > CORE` integrals are taken in the variable `u = 1/eps`.
const CORE: f64 = 1024.0;

/// Tail integrals stop at `|eps| = 1/U_MIN`; finite-variance laws put
/// negligible mass there and `u^2` stays representable.
const U_MIN: f64 = 1e-100;

/// Required accuracy of the defining equation at the returned root.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub tau_star: f64,
    /// Truncated second moment at `tau_star`.
    pub sigma_tau_star_sq: f64,
    /// `n sigma_tau_star^2 / (4 z^2)`.
    pub lower_bound_sq: f64,
    /// `n sigma^2 / (2 z^2)`.
    pub upper_bound_sq: f64,
    /// `E[tau/sqrt(tau^2 + sigma^2 eps^2)] - (1 - z^2/n)` at `tau_star`.
    pub residual: f64,
    pub n: usize,
    pub z: f64,
    pub sigma: f64,
}

impl OracleSolution {
    /// Whether `lower_bound_sq <= tau_star^2 <= upper_bound_sq` up to a
    /// relative slack.
    pub fn bounds_hold(&self, rel_slack: f64) -> bool {
        let t2 = self.tau_star * self.tau_star;
        t2 >= self.lower_bound_sq * (1.0 - rel_slack) && t2 <= self.upper_bound_sq * (1.0 + rel_slack)
    }
}

/// `E f(eps)` restricted to `lo < eps < hi` (either end may be infinite).
/// `hints` are extra breakpoints where `f` changes character.
pub fn expect_between<F: Fn(f64) -> f64>(noise: &NoiseModel, f: F, lo: f64, hi: f64, hints: &[f64]) -> Result<f64> {
    if let Some(atoms) = noise.atoms() {
        return Ok(atoms.iter().filter(|(v, _)| *v >= lo && *v <= hi).map(|(v, p)| p * f(*v)).sum());
    }
    let lo = lo.max(noise.support_lower());
    if lo >= hi {
        return Ok(0.0);
    }
    let tol = Tolerance::default();
    let g = |e: f64| {
        let d = noise.density(e);
        if d == 0.0 {
            0.0
        } else {
            f(e) * d
        }
    };

    let mut points: Vec<f64> = vec![0.0];
    for k in -6..=10 {
        let p = 2f64.powi(k);
        points.push(p);
        points.push(-p);
    }
    points.extend(hints.iter().copied().filter(|h| h.is_finite()));
    points.push(lo.max(-CORE));
    points.push(hi.min(CORE));
    let a = lo.max(-CORE);
    let b = hi.min(CORE);
    points.retain(|&p| p >= a && p <= b);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate(g, w[0], w[1], tol)?;
    }

    // Tails in u = 1/|eps|: int_{CORE}^{hi} g(e) de = int_{1/hi}^{1/CORE} g(1/u) / u^2 du.
    let tail = |sign: f64, far: f64| -> Result<f64> {
        let u_lo = if far.is_infinite() { U_MIN } else { (1.0 / far).max(U_MIN) };
        let h = |u: f64| g(sign / u) / (u * u);
        let mut acc = 0.0;
        // geometric split towards u = 0, where heavy-tailed integrands concentrate
        let mut right = 1.0 / CORE;
        while right > u_lo {
            let left = (right * 1e-3).max(u_lo);
            acc += integrate(h, left, right, tol)?;
            right = left;
        }
        Ok(acc)
    };
    if hi > CORE {
        total += tail(1.0, hi)?;
    }
    if lo < -CORE {
        total += tail(-1.0, -lo)?;
    }
    Ok(total)
}

pub fn expect<F: Fn(f64) -> f64>(noise: &NoiseModel, f: F, hints: &[f64]) -> Result<f64> {
    expect_between(noise, f, f64::NEG_INFINITY, f64::INFINITY, hints)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `E[sigma^2 eps^2 1(sigma^2 eps^2 <= tau^2)]`.
pub fn sigma_tau_sq(noise: &NoiseModel, sigma: f64, tau: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("tau", tau)?;
    let t = tau / sigma;
    let m = expect_between(noise, |e| e * e, -t, t, &[])?;
    Ok(sigma * sigma * m.clamp(0.0, 1.0))
}

/// `E[1 - tau / sqrt(tau^2 + sigma^2 eps^2)]`, decreasing in `tau`.
pub fn expected_shortfall(noise: &NoiseModel, sigma: f64, tau: f64) -> Result<f64> {
    let t = tau / sigma;
    expect(
        noise,
        |e| {
            let r = sigma * e;
            excess(r, tau) / tau.hypot(r)
        },
        &[t, -t, 0.25 * t, -0.25 * t, 4.0 * t, -4.0 * t],
    )
}

/// Left-hand side of the defining equation, `E[tau / sqrt(tau^2 + sigma^2 eps^2)]`.
pub fn expected_ratio(noise: &NoiseModel, sigma: f64, tau: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("tau", tau)?;
    Ok(1.0 - expected_shortfall(noise, sigma, tau)?)
}

/// Solves the defining equation for `tau_star` by bisection on
/// `[1e-12 sigma, sigma sqrt(n) / z]`.
pub fn tau_star(noise: &NoiseModel, sigma: f64, n: usize, z: f64) -> Result<OracleSolution> {
    check_positive("sigma", sigma)?;
    check_positive("z", z)?;
    let nf = n as f64;
    let z_sq = z * z;
    if nf <= z_sq {
        return Err(Error::OracleUndefined { n, z_sq });
    }
    let target = z_sq / nf;

    let mut lo = 1e-12 * sigma;
    let mut hi = sigma * nf.sqrt() / z;
    let f_lo = expected_shortfall(noise, sigma, lo)?;
    if f_lo < target {
        return Err(Error::domain(format!("oracle root lies below {lo:e}")));
    }
    // tau_star^2 <= n sigma^2 / (2 z^2) puts the root below hi; widen only if quadrature disagrees
    let mut widen = 0;
    while expected_shortfall(noise, sigma, hi)? > target {
        hi *= 2.0;
        widen += 1;
        if widen > 60 {
            return Err(Error::domain("could not bracket tau_star"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if expected_shortfall(noise, sigma, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let residual = target - expected_shortfall(noise, sigma, tau)?;
    if residual.abs() > RESIDUAL_TOL {
        return Err(Error::Quadrature { lo, hi, error_estimate: residual.abs() });
    }
    let s2 = sigma_tau_sq(noise, sigma, tau)?;
    Ok(OracleSolution {
        tau_star: tau,
        sigma_tau_star_sq: s2,
        lower_bound_sq: nf * s2 / (4.0 * z_sq),
        upper_bound_sq: nf * sigma * sigma / (2.0 * z_sq),
        residual,
        n,
        z,
        sigma,
    })
}

/// True iff `tau_star(n)` strictly increases along the sorted, deduplicated grid.
pub fn tau_star_monotonicity_check(noise: &NoiseModel, sigma: f64, n_grid: &[usize], z: f64) -> Result<bool> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let taus = grid
        .iter()
        .map(|&n| tau_star(noise, sigma, n, z).map(|s| s.tau_star))
        .collect::<Result<Vec<_>>>()?;
    Ok(taus.windows(2).all(|w| w[1] > w[0]))
}
