//! Standardized noise laws and seeded sampling.
//!
//! Every [`NoiseModel`] is an affine image `eps = (X - shift) / scale` of a raw
//! law `X`, with the affine map chosen from closed-form raw moments so that
//! `E eps = 0` and `E eps^2 = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::loss::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Gaussian,
    StudentT { df: f64 },
    /// Pareto with minimum 1.
    Pareto { shape: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    /// Rademacher: +1 or -1 with equal probability.
    TwoPoint,
    /// `(1 - eps) N(0, 1) + eps N(0, scale^2)`.
    ContaminatedGaussian { eps: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    law: NoiseLaw,
    shift: f64,
    scale: f64,
}

impl NoiseModel {
    /// Validates the raw law and computes the standardizing transform.
    pub fn standardize(law: NoiseLaw) -> Result<Self> {
        let (shift, var) = match law {
            NoiseLaw::Gaussian | NoiseLaw::TwoPoint => (0.0, 1.0),
            NoiseLaw::StudentT { df } => {
                if !(df > 2.0 && df.is_finite()) {
                    return Err(Error::InfiniteVariance(format!("student_t requires df > 2, got {df}")));
                }
                (0.0, df / (df - 2.0))
            }
            NoiseLaw::Pareto { shape: a } => {
                if !(a > 2.0 && a.is_finite()) {
                    return Err(Error::InfiniteVariance(format!("pareto requires shape > 2, got {a}")));
                }
                (a / (a - 1.0), a / ((a - 1.0) * (a - 1.0) * (a - 2.0)))
            }
            NoiseLaw::LogNormal { meanlog, sdlog } => {
                if !meanlog.is_finite() || !(sdlog > 0.0 && sdlog.is_finite()) {
                    return Err(Error::InvalidLaw(format!(
                        "lognormal requires finite meanlog and sdlog > 0, got ({meanlog}, {sdlog})"
                    )));
                }
                let s2 = sdlog * sdlog;
                let m = (meanlog + 0.5 * s2).exp();
                (m, s2.exp_m1() * (2.0 * meanlog + s2).exp())
            }
            NoiseLaw::ContaminatedGaussian { eps, scale } => {
                if !(eps > 0.0 && eps < 1.0) || !(scale > 1.0 && scale.is_finite()) {
                    return Err(Error::InvalidLaw(format!(
                        "contaminated_gaussian requires eps in (0,1) and scale > 1, got ({eps}, {scale})"
                    )));
                }
                (0.0, 1.0 - eps + eps * scale * scale)
            }
        };
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::InvalidLaw(format!("{law:?} has variance {var}")));
        }
        Ok(NoiseModel { law, shift, scale: var.sqrt() })
    }

    pub fn gaussian() -> Self {
        NoiseModel::standardize(NoiseLaw::Gaussian).unwrap()
    }

    pub fn two_point() -> Self {
        NoiseModel::standardize(NoiseLaw::TwoPoint).unwrap()
    }

    pub fn student_t(df: f64) -> Result<Self> {
        NoiseModel::standardize(NoiseLaw::StudentT { df })
    }

    pub fn pareto(shape: f64) -> Result<Self> {
        NoiseModel::standardize(NoiseLaw::Pareto { shape })
    }

    pub fn law(&self) -> NoiseLaw {
        self.law
    }

    /// Offset subtracted from the raw variate.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Divisor applied after the shift (the raw standard deviation).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Point masses `(value, probability)` for discrete laws.
    pub fn atoms(&self) -> Option<&'static [(f64, f64)]> {
        match self.law {
            NoiseLaw::TwoPoint => Some(&[(-1.0, 0.5), (1.0, 0.5)]),
            _ => None,
        }
    }

    /// Infimum of the support of `eps`.
    pub fn support_lower(&self) -> f64 {
        match self.law {
            NoiseLaw::Pareto { .. } => (1.0 - self.shift) / self.scale,
            NoiseLaw::LogNormal { .. } => -self.shift / self.scale,
            NoiseLaw::TwoPoint => -1.0,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Density of the standardized variable; zero for discrete laws.
    pub fn density(&self, e: f64) -> f64 {
        let x = self.shift + self.scale * e;
        self.scale * self.raw_density(x)
    }

    fn raw_density(&self, x: f64) -> f64 {
        match self.law {
            NoiseLaw::Gaussian => std_normal_pdf(x),
            NoiseLaw::StudentT { df } => {
                let log_c = libm::lgamma(0.5 * (df + 1.0)) - libm::lgamma(0.5 * df) - 0.5 * (df * PI).ln();
                (log_c - 0.5 * (df + 1.0) * (x * x / df).ln_1p()).exp()
            }
            NoiseLaw::Pareto { shape } => {
                if x < 1.0 {
                    0.0
                } else {
                    shape * x.powf(-shape - 1.0)
                }
            }
            NoiseLaw::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let u = (x.ln() - meanlog) / sdlog;
                    (-0.5 * u * u).exp() / (x * sdlog * (2.0 * PI).sqrt())
                }
            }
            NoiseLaw::TwoPoint => 0.0,
            NoiseLaw::ContaminatedGaussian { eps, scale } => {
                (1.0 - eps) * std_normal_pdf(x) + eps * std_normal_pdf(x / scale) / scale
            }
        }
    }

    /// One standardized draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let raw = match self.law {
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::StudentT { df } => StudentT::new(df).expect("validated df").sample(rng),
            NoiseLaw::Pareto { shape } => Pareto::new(1.0, shape).expect("validated shape").sample(rng),
            NoiseLaw::LogNormal { meanlog, sdlog } => {
                LogNormal::new(meanlog, sdlog).expect("validated sdlog").sample(rng)
            }
            NoiseLaw::TwoPoint => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseLaw::ContaminatedGaussian { eps, scale } => {
                let g: f64 = StandardNormal.sample(rng);
                if rng.random::<f64>() < eps {
                    g * scale
                } else {
                    g
                }
            }
        };
        (raw - self.shift) / self.scale
    }

    /// `n` standardized draws from a generator seeded with `seed`.
    pub fn draw_n(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Draws `y_i = mu_true + sigma * eps_i`, deterministic in `seed`.
pub fn sample(noise: &NoiseModel, sigma: f64, n: usize, mu_true: f64, seed: u64) -> Result<Sample> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be nonnegative and finite, got {sigma}")));
    }
    if !mu_true.is_finite() {
        return Err(Error::domain(format!("mu must be finite, got {mu_true}")));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let values = noise.draw_n(n, seed).into_iter().map(|e| mu_true + sigma * e).collect();
    Sample::new(values)
}

/// Mixes a base seed with a path of indices (replication, grid point, ...)
/// into an independent-looking 64-bit seed. SplitMix64 finalizer per step.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix(base);
    for &p in path {
        s = splitmix(s ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    s
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.law {
            NoiseLaw::Gaussian => write!(f, "gaussian"),
            NoiseLaw::StudentT { df } => write!(f, "student_t:df={df}"),
            NoiseLaw::Pareto { shape } => write!(f, "pareto:shape={shape}"),
            NoiseLaw::LogNormal { meanlog, sdlog } => write!(f, "lognormal:meanlog={meanlog},sdlog={sdlog}"),
            NoiseLaw::TwoPoint => write!(f, "two_point"),
            NoiseLaw::ContaminatedGaussian { eps, scale } => {
                write!(f, "contaminated_gaussian:eps={eps},scale={scale}")
            }
        }
    }
}

/// Parses `name` or `name:key=value,key=value`, e.g. `student_t:df=3`.
impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b)),
            None => (s, None),
        };
        let mut params: Vec<(String, f64)> = Vec::new();
        if let Some(rest) = rest {
            for kv in rest.split(',').filter(|t| !t.trim().is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidLaw(format!("expected key=value in '{kv}'")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidLaw(format!("bad number '{}' for '{}'", v.trim(), k.trim())))?;
                params.push((k.trim().to_string(), v));
            }
        }
        let mut take = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.iter().position(|(k, _)| k == key) {
                Some(i) => Ok(params.remove(i).1),
                None => default.ok_or_else(|| Error::InvalidLaw(format!("{name} requires parameter '{key}'"))),
            }
        };
        let law = match name {
            "gaussian" | "normal" => NoiseLaw::Gaussian,
            "student_t" | "t" => NoiseLaw::StudentT { df: take("df", None)? },
            "pareto" => NoiseLaw::Pareto { shape: take("shape", None)? },
            "lognormal" => NoiseLaw::LogNormal {
                meanlog: take("meanlog", Some(0.0))?,
                sdlog: take("sdlog", Some(1.0))?,
            },
            "two_point" => NoiseLaw::TwoPoint,
            "contaminated_gaussian" => NoiseLaw::ContaminatedGaussian {
                eps: take("eps", None)?,
                scale: take("scale", None)?,
            },
            other => return Err(Error::InvalidLaw(format!("unknown law '{other}'"))),
        };
        if let Some((k, _)) = params.first() {
            return Err(Error::InvalidLaw(format!("unknown parameter '{k}' for {name}")));
        }
        NoiseModel::standardize(law)
    }
}
