//! Parametric reference distributions with exact quantiles.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_cdf, beta_pdf, beta_quantile, normal_cdf, normal_pdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RefDist {
    Normal { mean: f64, sd: f64 },
    /// Normal restricted to `[lo, hi]`.
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl RefDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RefDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            RefDist::TruncNormal { mean, sd, lo, hi } => {
                mean.is_finite() && sd > 0.0 && lo < hi && lo.is_finite() && hi.is_finite()
            }
            RefDist::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            RefDist::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid reference distribution {self:?}")))
        }
    }

    /// `(Phi(alpha), Phi(beta) - Phi(alpha))` for the truncation bounds.
    fn tn_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
        let fa = normal_cdf((lo - mean) / sd);
        let fb = normal_cdf((hi - mean) / sd);
        (fa, fb - fa)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            RefDist::Normal { mean, sd } => mean + sd * normal_quantile(p),
            RefDist::TruncNormal { mean, sd, lo, hi } => {
                let (fa, z) = Self::tn_mass(mean, sd, lo, hi);
                (mean + sd * normal_quantile(fa + p * z)).clamp(lo, hi)
            }
            RefDist::Beta { a, b } => beta_quantile(a, b, p),
            RefDist::Uniform { lo, hi } => lo + (hi - lo) * p,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            RefDist::Normal { mean, sd } => normal_cdf((x - mean) / sd),
            RefDist::TruncNormal { mean, sd, lo, hi } => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    let (fa, z) = Self::tn_mass(mean, sd, lo, hi);
                    ((normal_cdf((x - mean) / sd) - fa) / z).clamp(0.0, 1.0)
                }
            }
            RefDist::Beta { a, b } => beta_cdf(a, b, x),
            RefDist::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            RefDist::Normal { mean, sd } => normal_pdf((x - mean) / sd) / sd,
            RefDist::TruncNormal { mean, sd, lo, hi } => {
                if x < lo || x > hi {
                    0.0
                } else {
                    let (_, z) = Self::tn_mass(mean, sd, lo, hi);
                    normal_pdf((x - mean) / sd) / (sd * z)
                }
            }
            RefDist::Beta { a, b } => beta_pdf(a, b, x),
            RefDist::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }

    /// Supremum of the density (infinite for Beta with a shape below 1).
    pub fn density_sup(&self) -> f64 {
        match *self {
            RefDist::Normal { sd, .. } => normal_pdf(0.0) / sd,
            RefDist::TruncNormal { mean, lo, hi, .. } => self.density(mean.clamp(lo, hi)),
            RefDist::Beta { a, b } => {
                if a < 1.0 || b < 1.0 {
                    f64::INFINITY
                } else if a == 1.0 && b == 1.0 {
                    1.0
                } else if a == 1.0 {
                    b
                } else if b == 1.0 {
                    a
                } else {
                    self.density((a - 1.0) / (a + b - 2.0))
                }
            }
            RefDist::Uniform { lo, hi } => 1.0 / (hi - lo),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RefDist::Normal { mean, .. } => mean,
            RefDist::TruncNormal { mean, sd, lo, hi } => {
                let (_, z) = Self::tn_mass(mean, sd, lo, hi);
                let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
                mean + sd * (normal_pdf(a) - normal_pdf(b)) / z
            }
            RefDist::Beta { a, b } => a / (a + b),
            RefDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// One draw `x` together with its level `u = F(x)`.
    pub fn sample_with_level<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            RefDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                (mean + sd * z, normal_cdf(z))
            }
            RefDist::Beta { a, b } => {
                let x: f64 = rand_distr::Beta::new(a, b)
                    .expect("validated shape parameters")
                    .sample(rng);
                (x, beta_cdf(a, b, x))
            }
            _ => {
                let u: f64 = open_unit(rng);
                (self.quantile(u), u)
            }
        }
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
