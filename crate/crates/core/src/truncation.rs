//! Truncation choices and cross-validation fold assignment.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the response-side count `K` (or the single count of a one-sided
/// model) is chosen. The predictor-side count `J` of a two-sided model is
/// always chosen by cross-validation unless fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum TruncMethod {
    /// Smallest count with cumulative fraction of variance explained at least `1 - alpha`.
    Fve,
    /// Cross-validated reconstruction or prediction error.
    Cv,
    /// Counts given explicitly (`k` is ignored by one-sided models).
    Fixed { j: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationChoice {
    pub method: TruncMethod,
    /// FVE threshold complement.
    pub alpha: f64,
    /// Fold count; `None` means leave-one-out for `n <= 30` and 5 folds otherwise.
    pub folds: Option<usize>,
    /// Seed of the fold shuffle.
    pub seed: u64,
}

impl Default for TruncationChoice {
    fn default() -> Self {
        Self {
            method: TruncMethod::Fve,
            alpha: 0.05,
            folds: None,
            seed: 0,
        }
    }
}

impl TruncationChoice {
    pub fn fve(alpha: f64) -> Self {
        Self {
            method: TruncMethod::Fve,
            alpha,
            ..Self::default()
        }
    }

    pub fn cv(folds: Option<usize>) -> Self {
        Self {
            method: TruncMethod::Cv,
            folds,
            ..Self::default()
        }
    }

    pub fn fixed(j: usize, k: usize) -> Self {
        Self {
            method: TruncMethod::Fixed { j, k },
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if matches!(self.folds, Some(f) if f < 2) {
            return Err(Error::InvalidInput("at least 2 folds are required".into()));
        }
        if let TruncMethod::Fixed { j, .. } = self.method {
            if j == 0 {
                return Err(Error::InvalidInput("fixed truncation needs j >= 1".into()));
            }
        }
        Ok(())
    }

    /// Fold count used for a sample of size `n`.
    pub fn effective_folds(&self, n: usize) -> usize {
        self.folds.unwrap_or(if n <= 30 { n } else { 5 }).min(n)
    }
}

impl fmt::Display for TruncationChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            TruncMethod::Fve => write!(f, "fve:{}", 1.0 - self.alpha),
            TruncMethod::Cv => match self.folds {
                Some(k) => write!(f, "cv:{k}"),
                None => write!(f, "cv"),
            },
            TruncMethod::Fixed { j, k } => write!(f, "fixed:{j},{k}"),
        }
    }
}

/// Parses `fve`, `fve:0.95`, `cv`, `cv:5`, `fixed:J` or `fixed:J,K`.
impl FromStr for TruncationChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse truncation spec '{s}'"));
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let choice = match name {
            "fve" => {
                let level = match arg {
                    Some(a) => a.parse::<f64>().map_err(|_| bad())?,
                    None => 0.95,
                };
                Self::fve(1.0 - level)
            }
            "cv" => {
                let folds = match arg {
                    Some("loo") => Some(usize::MAX),
                    Some(a) => Some(a.parse::<usize>().map_err(|_| bad())?),
                    None => None,
                };
                Self::cv(folds)
            }
            "fixed" => {
                let a = arg.ok_or_else(bad)?;
                let (j, k) = match a.split_once(',') {
                    Some((j, k)) => (j.trim(), k.trim()),
                    None => (a, a),
                };
                Self::fixed(
                    j.parse().map_err(|_| bad())?,
                    k.parse().map_err(|_| bad())?,
                )
            }
            _ => return Err(bad()),
        };
        choice.validate()?;
        Ok(choice)
    }
}

/// Fold label of every unit.
///
/// Units are first put in the order given by `cmp` (a data-dependent order,
/// so the assignment does not depend on how the caller ordered the sample),
/// then shuffled with `seed` and dealt round-robin.
pub fn fold_labels(
    n: usize,
    folds: usize,
    seed: u64,
    cmp: impl Fn(usize, usize) -> Ordering,
) -> Vec<usize> {
    let folds = folds.clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(a, b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        labels[i] = r % folds;
    }
    labels
}

/// Contiguous blocks, for serially dependent data.
pub fn blocked_fold_labels(n: usize, folds: usize) -> Vec<usize> {
    let folds = folds.clamp(1, n.max(1));
    (0..n).map(|i| i * folds / n).collect()
}

/// Lexicographic comparison of two float slices.
pub(crate) fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Index of the smallest value; later candidates must beat the incumbent by
/// more than a relative `1e-12` to win, so ties go to the earliest.
pub(crate) fn argmin_parsimonious(errs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in errs.iter().enumerate().skip(1) {
        let b = errs[best];
        if e < b - 1e-12 * b.abs().max(f64::MIN_POSITIVE) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        let c: TruncationChoice = "fve:0.9".parse().unwrap();
        assert_eq!(c.method, TruncMethod::Fve);
        assert!((c.alpha - 0.1).abs() < 1e-15);
        let c: TruncationChoice = "cv:5".parse().unwrap();
        assert_eq!((c.method, c.folds), (TruncMethod::Cv, Some(5)));
        let c: TruncationChoice = "fixed:3,4".parse().unwrap();
        assert_eq!(c.method, TruncMethod::Fixed { j: 3, k: 4 });
        let c: TruncationChoice = "fixed:2".parse().unwrap();
        assert_eq!(c.method, TruncMethod::Fixed { j: 2, k: 2 });
        assert!("fve:1.5".parse::<TruncationChoice>().is_err());
        assert!("cv:1".parse::<TruncationChoice>().is_err());
        assert!("pca".parse::<TruncationChoice>().is_err());
        assert_eq!("cv:5".parse::<TruncationChoice>().unwrap().to_string(), "cv:5");
    }

    #[test]
    fn default_fold_rule() {
        let c = TruncationChoice::default();
        assert_eq!(c.effective_folds(30), 30);
        assert_eq!(c.effective_folds(31), 5);
        assert_eq!(TruncationChoice::cv(Some(usize::MAX)).effective_folds(40), 40);
    }

    #[test]
    fn folds_are_balanced_and_order_free() {
        let keys: Vec<f64> = (0..23).map(|i| ((i * 7) % 23) as f64).collect();
        let labels = fold_labels(23, 5, 9, |a, b| keys[a].total_cmp(&keys[b]));
        let mut counts = [0; 5];
        for &l in &labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5));

        // Reversing the caller's order moves labels with their units.
        let rev: Vec<f64> = keys.iter().rev().copied().collect();
        let labels_rev = fold_labels(23, 5, 9, |a, b| rev[a].total_cmp(&rev[b]));
        for i in 0..23 {
            assert_eq!(labels[i], labels_rev[22 - i]);
        }
    }

    #[test]
    fn blocked_folds_are_contiguous() {
        assert_eq!(blocked_fold_labels(7, 3), vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn ties_go_to_the_first() {
        assert_eq!(argmin_parsimonious(&[3.0, 2.0, 2.0, 2.5]), 1);
        assert_eq!(argmin_parsimonious(&[1.0, 1.0 - 1e-14, 0.5]), 2);
        assert_eq!(argmin_parsimonious(&[1.0, 1.0 - 1e-14]), 0);
    }
}
