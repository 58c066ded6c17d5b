//! Distribution-to-scalar regression: `E(Y | nu) = E(Y) + <beta_1, Log nu>`.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::distribution::DistributionQ;
use crate::error::{Error, Result};
use crate::geometry::{log_map, TangentVector};
use crate::truncation::{argmin_parsimonious, cmp_slices, fold_labels, TruncMethod, TruncationChoice};
use crate::wfpca::{eigen_from_logs, frechet_mean, log_maps, recentered, EigenSystem, FrechetMean, MAX_EIGEN};

/// Fitted distribution-to-scalar regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarFit {
    predictor_mean: FrechetMean,
    es_x: EigenSystem,
    j: usize,
    /// `lambda_j^{-1} n^{-1} sum_i (Y_i - Ybar) <Log nu_i, phi_j>`.
    beta1_scores: Vec<f64>,
    intercept: f64,
    trunc: TruncationChoice,
}

impl ScalarFit {
    pub fn predictor_mean(&self) -> &FrechetMean {
        &self.predictor_mean
    }

    pub fn es_x(&self) -> &EigenSystem {
        &self.es_x
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn beta1_scores(&self) -> &[f64] {
        &self.beta1_scores
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn truncation(&self) -> &TruncationChoice {
        &self.trunc
    }

    /// `beta_1` in quantile coordinates at the predictor mean.
    pub fn beta1(&self) -> Vec<f64> {
        self.es_x.reconstruct(&self.beta1_scores)
    }

    pub fn predict(&self, predictor: &DistributionQ) -> Result<f64> {
        let v = log_map(&self.predictor_mean.mean, predictor)?;
        let s = self.es_x.scores_of(v.vals(), self.j)?;
        Ok(self.intercept + s.iter().zip(&self.beta1_scores).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Sample mean computed relative to the first value, so a constant sample
/// has exactly that constant as its mean.
fn stable_mean(y: &[f64]) -> f64 {
    let y0 = y[0];
    y0 + y.iter().map(|v| v - y0).sum::<f64>() / y.len() as f64
}

fn beta_scores(scores: &[Vec<f64>], y: &[f64], ybar: f64, lambda: &[f64], j: usize) -> Vec<f64> {
    let n = y.len() as f64;
    (0..j)
        .map(|a| {
            let c: f64 = scores.iter().zip(y).map(|(s, yi)| (yi - ybar) * s[a]).sum::<f64>() / n;
            c / lambda[a]
        })
        .collect()
}

fn count_cv(logs: &[TangentVector], y: &[f64], trunc: &TruncationChoice, jmax: usize) -> usize {
    let n = logs.len();
    let folds = trunc.effective_folds(n);
    let labels = fold_labels(n, folds, trunc.seed, |a, b| {
        cmp_slices(logs[a].vals(), logs[b].vals()).then_with(|| y[a].total_cmp(&y[b]))
    });
    let mut errs = vec![0.0; jmax];
    for f in 0..folds {
        let centred = recentered(logs, |i| labels[i] != f);
        let mut train = Vec::new();
        let mut ytr = Vec::new();
        for i in (0..n).filter(|&i| labels[i] != f) {
            train.push(centred[i].clone());
            ytr.push(y[i]);
        }
        let Ok(ex) = eigen_from_logs(&train, MAX_EIGEN) else {
            continue;
        };
        let jf = ex.rank().min(jmax);
        let scores: Vec<Vec<f64>> = train
            .iter()
            .map(|v| ex.scores_of(v.vals(), jf).expect("within rank"))
            .collect();
        let ybar = stable_mean(&ytr);
        let beta = beta_scores(&scores, &ytr, ybar, ex.eigenvalues(), jf);
        for i in (0..n).filter(|&i| labels[i] == f) {
            let s = ex.scores_of(centred[i].vals(), jf).expect("within rank");
            let mut pred = ybar;
            for (jj, e) in errs.iter_mut().enumerate() {
                if jj < jf {
                    pred += beta[jj] * s[jj];
                }
                *e += (y[i] - pred).powi(2);
            }
        }
    }
    argmin_parsimonious(&errs) + 1
}

/// Fits the regression of scalars `y` on distributions `predictors`.
pub fn fit_d2s<D: Borrow<DistributionQ>>(
    predictors: &[D],
    y: &[f64],
    trunc: &TruncationChoice,
) -> Result<ScalarFit> {
    let n = predictors.len();
    if n != y.len() {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("responses must be finite".into()));
    }
    trunc.validate()?;
    let predictor_mean = frechet_mean(predictors)?;
    let logs = log_maps(&predictor_mean.mean, predictors)?;
    let es_x = eigen_from_logs(&logs, MAX_EIGEN)?;
    let rank = es_x.rank();
    if rank == 0 {
        return Err(Error::DegenerateDesign(
            "predictor covariance has no positive eigenvalue".into(),
        ));
    }
    let j = match trunc.method {
        TruncMethod::Fixed { j, .. } => j.min(es_x.numerical_rank()),
        TruncMethod::Fve => es_x.fve_count(trunc.alpha),
        TruncMethod::Cv => count_cv(&logs, y, trunc, rank.min(MAX_EIGEN)),
    };
    let scores: Vec<Vec<f64>> = logs
        .iter()
        .map(|v| es_x.scores_of(v.vals(), j))
        .collect::<Result<_>>()?;
    let intercept = stable_mean(y);
    let beta1_scores = beta_scores(&scores, y, intercept, es_x.eigenvalues(), j);
    Ok(ScalarFit {
        predictor_mean,
        es_x,
        j,
        beta1_scores,
        intercept,
        trunc: *trunc,
    })
}

pub fn predict_d2s(fit: &ScalarFit, predictor: &DistributionQ) -> Result<f64> {
    fit.predict(predictor)
}

/// Mean absolute difference between paired values.
pub fn average_prediction_error(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(truth.iter().zip(predicted).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64)
}
