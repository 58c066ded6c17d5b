//! Simulation configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DEFAULT_GRID_SIZE;
use crate::truncation::TruncationChoice;

use super::refdist::RefDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Truncated normal predictor and response means on `[0, 1]`.
    Tgauss,
    /// Beta predictor and response means.
    Beta,
    /// Gaussian pairs whose means are linearly related.
    GaussLinear,
    /// Gaussian pairs whose means are quadratically related.
    GaussQuadratic,
    /// Scalar responses on distorted Gaussian predictors.
    D2sGauss,
    /// Scalar responses on distorted Beta predictors.
    D2sBeta,
}

impl Case {
    pub const ALL: [Case; 6] = [
        Case::Tgauss,
        Case::Beta,
        Case::GaussLinear,
        Case::GaussQuadratic,
        Case::D2sGauss,
        Case::D2sBeta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Tgauss => "tgauss",
            Case::Beta => "beta",
            Case::GaussLinear => "gauss_linear",
            Case::GaussQuadratic => "gauss_quadratic",
            Case::D2sGauss => "d2s_gauss",
            Case::D2sBeta => "d2s_beta",
        }
    }

    /// Whether responses are scalars.
    pub fn is_scalar(self) -> bool {
        matches!(self, Case::D2sGauss | Case::D2sBeta)
    }

    /// Whether data come from the sine-basis construction.
    pub fn is_framework(self) -> bool {
        matches!(self, Case::Tgauss | Case::Beta)
    }

    /// Predictor and response means of the sine-basis construction.
    pub fn reference_pair(self) -> Option<(RefDist, RefDist)> {
        match self {
            Case::Tgauss => Some((
                RefDist::TruncNormal { mean: 0.5, sd: 0.2, lo: 0.0, hi: 1.0 },
                RefDist::TruncNormal { mean: 0.75, sd: 0.3, lo: 0.0, hi: 1.0 },
            )),
            Case::Beta => Some((RefDist::Beta { a: 6.0, b: 2.0 }, RefDist::Beta { a: 2.0, b: 4.0 })),
            _ => None,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Case::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown case '{s}'")))
    }
}

/// How the regression coefficients of the sine-basis construction decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoefMode {
    /// `upsilon_j = 2^-j`, `b_jk = 2^-k (j / k) D1 / D2`; responses carry a
    /// random distortion instead of additive noise.
    Fig1,
    /// `upsilon_j = j^-a0`, `b_jk = p j^(1 - a1) k^(-a2 - 1) D1 / (D2 zeta(a2))`,
    /// with bounded additive tangent noise on the response.
    Powerlaw { p: f64, a0: f64, a1: f64, a2: f64 },
}

impl CoefMode {
    pub fn powerlaw_default() -> Self {
        CoefMode::Powerlaw {
            p: 0.9,
            a0: 1.5,
            a1: 8.5,
            a2: 5.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let CoefMode::Powerlaw { p, a0, a1, a2 } = *self {
            if !((0.0..1.0).contains(&p) && a0 > 0.5 && a1 > 1.5 && a2 > 1.0) {
                return Err(Error::InvalidInput(format!(
                    "power-law parameters out of range: p = {p}, a0 = {a0}, a1 = {a1}, a2 = {a2}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub case: Case,
    /// Training units per replicate.
    pub n: usize,
    /// Measurements per distribution; `None` uses exact quantiles.
    pub m: Option<usize>,
    /// Out-of-sample units per replicate.
    pub n_new: usize,
    pub replicates: usize,
    pub seed: u64,
    pub coef: CoefMode,
    /// Random distortion of responses (sine-basis cases with `Fig1` only).
    pub distortion: bool,
    /// Number of sine basis functions.
    pub rank: usize,
    pub grid_m: usize,
    pub trunc: TruncationChoice,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            case: Case::Tgauss,
            n: 200,
            m: Some(500),
            n_new: 200,
            replicates: 500,
            seed: 0,
            coef: CoefMode::Fig1,
            distortion: true,
            rank: 20,
            grid_m: DEFAULT_GRID_SIZE,
            trunc: TruncationChoice::default(),
        }
    }
}

impl SimConfig {
    pub fn new(case: Case) -> Self {
        let mut cfg = Self {
            case,
            ..Self::default()
        };
        if case.is_scalar() {
            cfg.trunc = TruncationChoice::cv(None);
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidInput(format!("n must be at least 3, got {}", self.n)));
        }
        if matches!(self.m, Some(m) if m < 2) {
            return Err(Error::InvalidInput("m must be at least 2".into()));
        }
        if self.n_new == 0 || self.replicates == 0 {
            return Err(Error::InvalidInput("n_new and replicates must be positive".into()));
        }
        if self.rank == 0 {
            return Err(Error::InvalidInput("rank must be positive".into()));
        }
        if self.grid_m < 16 {
            return Err(Error::InvalidInput(format!("grid size must be at least 16, got {}", self.grid_m)));
        }
        self.coef.validate()?;
        self.trunc.validate()
    }
}
