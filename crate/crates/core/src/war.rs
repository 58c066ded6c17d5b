//! First-order autoregression for distribution-valued time series.
//!
//! Each element is log-mapped at the series' Fréchet mean; the lag-one
//! operator is estimated in the eigenbasis of the lag-zero covariance as
//! `b_jl = lambda_j^{-1} zeta_jl` with
//! `zeta_jl = (n - 1)^{-1} sum_i <X_i, phi_j> <X_{i+1}, phi_l>`.

use std::borrow::Borrow;
use std::sync::Arc;

use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::d2d::boundary_projection;
use crate::distribution::{wasserstein_distance, DistributionQ};
use crate::error::{Error, Result};
use crate::geometry::{exp_map, log_map, TangentVector};
use crate::grid::ProbGrid;
use crate::sim::basis::{basis_table, kappa};
use crate::sim::refdist::RefDist;
use crate::sim::rng::{stream, Role};
use crate::special::zeta;
use crate::truncation::{argmin_parsimonious, blocked_fold_labels, TruncMethod, TruncationChoice};
use crate::wfpca::{eigen_from_logs, frechet_mean, log_maps, recentered, EigenSystem, FrechetMean, MAX_EIGEN};

/// Fraction of the series used for selecting the truncation.
pub const DEFAULT_SPLIT: f64 = 0.8;

/// Fitted autoregressive operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ARFit {
    mean: FrechetMean,
    es: EigenSystem,
    j: usize,
    /// `b[j][l]`.
    b: Vec<Vec<f64>>,
    /// Last element of the training series, the default forecast origin.
    last: DistributionQ,
    trunc: TruncationChoice,
    split: f64,
    /// Mean one-step `d_W` error on the held-out tail, when there is one.
    holdout_error: Option<f64>,
}

impl ARFit {
    pub fn mean(&self) -> &FrechetMean {
        &self.mean
    }

    pub fn es(&self) -> &EigenSystem {
        &self.es
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn last(&self) -> &DistributionQ {
        &self.last
    }

    pub fn truncation(&self) -> &TruncationChoice {
        &self.trunc
    }

    pub fn split(&self) -> f64 {
        self.split
    }

    pub fn holdout_error(&self) -> Option<f64> {
        self.holdout_error
    }

    /// Largest eigenvalue modulus of the score-space matrix.
    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.b)
    }

    /// Matrix of the fitted operator in an orthonormal basis `fns` (quantile
    /// coordinates): `entry[a][c] = <Gamma fns[a], fns[c]>`.
    pub fn operator_in_basis(&self, fns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let grid = self.mean.mean.grid();
        // proj[a][j] = <fns[a], phi_j>
        let proj: Vec<Vec<f64>> = fns
            .iter()
            .map(|f| (0..self.j).map(|j| grid.dot(f, self.es.eigenfunction(j))).collect())
            .collect();
        proj.iter()
            .map(|pa| {
                let img: Vec<f64> = (0..self.j)
                    .map(|l| pa.iter().zip(&self.b).map(|(x, row)| x * row[l]).sum())
                    .collect();
                proj.iter()
                    .map(|pc| pc.iter().zip(&img).map(|(x, y)| x * y).sum())
                    .collect()
            })
            .collect()
    }

    fn step_scores(&self, s: &[f64]) -> Vec<f64> {
        (0..self.j)
            .map(|l| s.iter().zip(&self.b).map(|(x, row)| x * row[l]).sum())
            .collect()
    }

    /// One-step forecast and its projection factor.
    pub fn forecast_one(&self, current: &DistributionQ) -> Result<(DistributionQ, f64)> {
        let v = log_map(&self.mean.mean, current)?;
        let s = self.es.scores_of(v.vals(), self.j)?;
        let g = TangentVector::from_parts(
            Arc::clone(&self.mean.mean),
            self.es.reconstruct(&self.step_scores(&s)),
        );
        let (g, eta) = boundary_projection(&g);
        Ok((exp_map(&g)?, eta))
    }

    /// Iterated forecasts, each fed back as the next input.
    pub fn forecast_rolling(
        &self,
        start: &DistributionQ,
        horizon: usize,
    ) -> Result<Vec<(DistributionQ, f64)>> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let mut out: Vec<(DistributionQ, f64)> = Vec::with_capacity(horizon);
        let mut cur = start.clone();
        for _ in 0..horizon {
            let (next, eta) = self.forecast_one(&cur)?;
            cur = next.clone();
            out.push((next, eta));
        }
        Ok(out)
    }
}

pub fn forecast_one(fit: &ARFit, current: &DistributionQ) -> Result<(DistributionQ, f64)> {
    fit.forecast_one(current)
}

pub fn forecast_rolling(
    fit: &ARFit,
    start: &DistributionQ,
    horizon: usize,
) -> Result<Vec<(DistributionQ, f64)>> {
    fit.forecast_rolling(start, horizon)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(b: &[Vec<f64>]) -> Result<f64> {
    let j = b.len();
    if j == 0 {
        return Ok(0.0);
    }
    let m = Mat::from_fn(j, j, |r, c| b[r][c]);
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues failed: {e:?}")))?;
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `zeta_jl / lambda_j` from consecutive score pairs.
fn lag_one_coefficients(
    scores: &[Vec<f64>],
    lambda: &[f64],
    j: usize,
    pairs: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    let np = pairs.len().max(1) as f64;
    (0..j)
        .map(|a| {
            (0..j)
                .map(|c| {
                    let z: f64 = pairs.iter().map(|&(s, t)| scores[s][a] * scores[t][c]).sum::<f64>() / np;
                    z / lambda[a]
                })
                .collect()
        })
        .collect()
}

/// Blocked cross-validation of the truncation on the logs of a series.
fn count_cv(logs: &[TangentVector], folds: usize, jmax: usize) -> usize {
    let n = logs.len();
    let labels = blocked_fold_labels(n, folds);
    let mut errs = vec![0.0; jmax];
    for f in 0..folds {
        let logs = recentered(logs, |i| labels[i] != f);
        let train: Vec<TangentVector> = (0..n)
            .filter(|&i| labels[i] != f)
            .map(|i| logs[i].clone())
            .collect();
        let Ok(es) = eigen_from_logs(&train, MAX_EIGEN) else {
            continue;
        };
        let jf = es.rank().min(jmax);
        if jf == 0 {
            continue;
        }
        let scores: Vec<Vec<f64>> = logs
            .iter()
            .map(|v| es.scores_of(v.vals(), jf).expect("within rank"))
            .collect();
        let fit_pairs: Vec<(usize, usize)> = (0..n - 1)
            .filter(|&i| labels[i] != f && labels[i + 1] != f)
            .map(|i| (i, i + 1))
            .collect();
        let b = lag_one_coefficients(&scores, es.eigenvalues(), jf, &fit_pairs);
        for i in (0..n - 1).filter(|&i| labels[i + 1] == f) {
            let (x, y) = (&scores[i], &scores[i + 1]);
            let ny = logs[i + 1].norm().powi(2);
            for (jj, e) in errs.iter_mut().enumerate() {
                let jc = (jj + 1).min(jf);
                let mut err = ny;
                for l in 0..jc {
                    let c: f64 = (0..jc).map(|a| x[a] * b[a][l]).sum();
                    err += c * c - 2.0 * c * y[l];
                }
                *e += err;
            }
        }
    }
    argmin_parsimonious(&errs) + 1
}

struct Estimate {
    mean: FrechetMean,
    es: EigenSystem,
    j: usize,
    b: Vec<Vec<f64>>,
}

fn estimate<D: Borrow<DistributionQ>>(series: &[D], j: Option<usize>, trunc: &TruncationChoice) -> Result<Estimate> {
    let n = series.len();
    let mean = frechet_mean(series)?;
    let logs = log_maps(&mean.mean, series)?;
    let es = eigen_from_logs(&logs, MAX_EIGEN)?;
    let rank = es.rank();
    if rank == 0 {
        return Err(Error::DegenerateDesign(
            "series has no variation around its mean".into(),
        ));
    }
    let j = match j {
        Some(j) => j.min(rank),
        None => match trunc.method {
            TruncMethod::Fixed { j, .. } => j.min(es.numerical_rank()),
            TruncMethod::Fve => es.fve_count(trunc.alpha),
            TruncMethod::Cv => {
                let folds = trunc.folds.unwrap_or(5).min(n / 2).max(2);
                count_cv(&logs, folds, rank.min(MAX_EIGEN))
            }
        },
    };
    let scores: Vec<Vec<f64>> = logs
        .iter()
        .map(|v| es.scores_of(v.vals(), j))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let b = lag_one_coefficients(&scores, es.eigenvalues(), j, &pairs);
    Ok(Estimate { mean, es, j, b })
}

/// Fits the model with the default chronological split.
pub fn fit_ar<D: Borrow<DistributionQ>>(series: &[D], trunc: &TruncationChoice) -> Result<ARFit> {
    fit_ar_with_split(series, trunc, DEFAULT_SPLIT)
}

/// Fits the model.
///
/// The truncation is selected on the first `split` fraction of the series;
/// the model refit there is scored by its one-step `d_W` error on the rest.
/// The returned operator is then estimated on the whole series with the
/// selected truncation.
pub fn fit_ar_with_split<D: Borrow<DistributionQ>>(
    series: &[D],
    trunc: &TruncationChoice,
    split: f64,
) -> Result<ARFit> {
    let n = series.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    trunc.validate()?;
    if !(split > 0.0 && split <= 1.0) {
        return Err(Error::InvalidInput(format!("split must lie in (0, 1], got {split}")));
    }
    let n_train = ((n as f64 * split).round() as usize).clamp(4.min(n), n);
    let train = estimate(&series[..n_train], None, trunc)?;
    let holdout_error = if n_train < n {
        let mut total = 0.0;
        let tfit = ARFit {
            mean: train.mean.clone(),
            es: train.es.clone(),
            j: train.j,
            b: train.b.clone(),
            last: series[n_train - 1].borrow().clone(),
            trunc: *trunc,
            split,
            holdout_error: None,
        };
        for t in n_train..n {
            let (pred, _) = tfit.forecast_one(series[t - 1].borrow())?;
            total += wasserstein_distance(&pred, series[t].borrow())?;
        }
        Some(total / (n - n_train) as f64)
    } else {
        None
    };
    let full = estimate(series, Some(train.j), trunc)?;
    Ok(ARFit {
        mean: full.mean,
        es: full.es,
        j: full.j,
        b: full.b,
        last: series[n - 1].borrow().clone(),
        trunc: *trunc,
        split,
        holdout_error,
    })
}

/// Stationary AR process built from a sine basis around a fixed mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ARProcessSpec {
    pub mean: RefDist,
    /// Weight of the autoregressive part versus the innovation.
    pub p: f64,
    pub a1: f64,
    pub a2: f64,
    /// Number of basis functions.
    pub rank: usize,
    /// Steps discarded before recording; `None` derives it from the spectral radius.
    pub burn_in: Option<usize>,
}

impl Default for ARProcessSpec {
    fn default() -> Self {
        Self {
            mean: RefDist::TruncNormal {
                mean: 0.5,
                sd: 0.2,
                lo: 0.0,
                hi: 1.0,
            },
            p: 0.9,
            a1: 8.5,
            a2: 5.0,
            rank: 20,
            burn_in: None,
        }
    }
}

impl ARProcessSpec {
    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        if !(self.p >= 0.0 && self.p < 1.0) {
            return Err(Error::InvalidInput(format!("p must lie in [0, 1), got {}", self.p)));
        }
        if !(self.a1 > 1.5 && self.a2 > 1.0) {
            return Err(Error::InvalidInput(format!(
                "need a1 > 3/2 and a2 > 1, got a1 = {}, a2 = {}",
                self.a1, self.a2
            )));
        }
        if self.rank == 0 {
            return Err(Error::InvalidInput("rank must be positive".into()));
        }
        if !self.mean.density_sup().is_finite() {
            return Err(Error::InvalidInput("mean distribution needs a bounded density".into()));
        }
        Ok(())
    }

    /// `b_jl = p j^{1 - a1} l^{-a2 - 1} / zeta(a2)`, `j, l = 1..=rank`.
    pub fn coefficients(&self) -> Vec<Vec<f64>> {
        let z = zeta(self.a2);
        (1..=self.rank)
            .map(|j| {
                (1..=self.rank)
                    .map(|l| self.p * (j as f64).powf(1.0 - self.a1) * (l as f64).powf(-self.a2 - 1.0) / z)
                    .collect()
            })
            .collect()
    }

    /// Half-widths `e_l` of the uniform innovations.
    pub fn innovation_bounds(&self) -> Vec<f64> {
        let za2 = zeta(self.a2);
        let d = self.mean.density_sup();
        let num = (1.0 - self.p) * zeta(self.a1 + self.a2);
        (1..=self.rank)
            .map(|l| num * (l as f64).powf(-self.a2 - 1.0) / (kappa(1) * d * za2 * za2))
            .collect()
    }

    /// Bound on `|g'|` for every generated tangent vector `g`.
    pub fn slope_bound(&self) -> f64 {
        let z12 = zeta(self.a1 + self.a2);
        (1.0 - self.p) * z12 / (zeta(self.a2) - self.p * z12)
    }

    /// Upper bound on the operator norm of `Gamma^r`.
    pub fn gamma_power_bound(&self, r: u32) -> f64 {
        let z12 = zeta(self.a1 + self.a2);
        let z2 = zeta(self.a2);
        self.p.powi(r as i32) * z12.powi(r as i32 - 1) * zeta(2.0 * self.a2 + 2.0).sqrt()
            * zeta(2.0 * self.a1 - 2.0).sqrt()
            / z2.powi(r as i32)
    }

    /// Smallest `r` with `gamma_power_bound(r) < 1`.
    pub fn first_contractive_power(&self) -> Option<u32> {
        (1..10_000).find(|&r| self.gamma_power_bound(r) < 1.0)
    }

    /// Burn-in long enough for the start-up transient to fall below `1e-10`.
    pub fn effective_burn_in(&self) -> usize {
        if let Some(b) = self.burn_in {
            return b;
        }
        let rho = spectral_radius(&self.coefficients()).unwrap_or(self.p);
        let needed = if rho > 0.0 && rho < 1.0 {
            ((1e-10f64).ln() / rho.ln()).ceil() as usize
        } else {
            0
        };
        needed.max(100)
    }
}

/// Simulated series with its generating scores.
#[derive(Debug, Clone)]
pub struct ARSeries {
    pub mean: Arc<DistributionQ>,
    pub series: Vec<DistributionQ>,
    /// Basis coefficients of each log, `scores[t][l]`.
    pub scores: Vec<Vec<f64>>,
    /// Basis functions in quantile coordinates.
    pub basis: Vec<Vec<f64>>,
}

/// Simulates `n` consecutive elements of the stationary process.
pub fn simulate_ar_process(
    spec: &ARProcessSpec,
    n: usize,
    grid: &Arc<ProbGrid>,
    seed: u64,
) -> Result<ARSeries> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("series length must be positive".into()));
    }
    let mean = Arc::new(DistributionQ::from_quantile_fn(Arc::clone(grid), |p| spec.mean.quantile(p))?);
    mean.require_atomless()?;
    let b = spec.coefficients();
    let e = spec.innovation_bounds();
    let basis = basis_table(spec.rank, grid.points());
    let burn = spec.effective_burn_in();
    let mut rng = stream(seed, 0, 0, Role::Noise);
    let mut x = vec![0.0; spec.rank];
    let mut series = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for t in 0..burn + n {
        let next: Vec<f64> = (0..spec.rank)
            .map(|l| {
                let ar: f64 = x.iter().zip(&b).map(|(xj, row)| xj * row[l]).sum();
                ar + rng.random_range(-e[l]..=e[l])
            })
            .collect();
        x = next;
        if t >= burn {
            let mut vals = vec![0.0; grid.len()];
            for (c, phi) in x.iter().zip(&basis) {
                for (v, f) in vals.iter_mut().zip(phi) {
                    *v += c * f;
                }
            }
            let g = TangentVector::from_parts(Arc::clone(&mean), vals);
            series.push(exp_map(&g)?);
            scores.push(x.clone());
        }
    }
    Ok(ARSeries {
        mean,
        series,
        scores,
        basis,
    })
}

/// Largest `|Delta g / Delta base|` over grid segments.
pub fn max_tangent_slope(base: &DistributionQ, vals: &[f64]) -> f64 {
    base.qvals()
        .windows(2)
        .zip(vals.windows(2))
        .map(|(q, v)| ((v[1] - v[0]) / (q[1] - q[0])).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<ProbGrid> {
        Arc::new(ProbGrid::midpoint(200).unwrap())
    }

    #[test]
    fn spec_constants() {
        let s = ARProcessSpec::default();
        s.validate().unwrap();
        let b = s.coefficients();
        assert!((b[0][0] - 0.9 / zeta(5.0)).abs() < 1e-15);
        assert!(s.slope_bound() < 1.0);
        assert!(s.first_contractive_power().is_some());
        // rank one, so the spectral radius is the trace
        let tr: f64 = (0..20).map(|j| b[j][j]).sum();
        assert!((spectral_radius(&b).unwrap() - tr).abs() < 1e-12);
        assert!(s.effective_burn_in() >= 100);
    }

    #[test]
    fn invalid_specs() {
        let s = ARProcessSpec { a1: 1.2, ..ARProcessSpec::default() };
        assert!(s.validate().is_err());
        let s = ARProcessSpec { p: 1.0, ..ARProcessSpec::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_weight_gives_iid_noise() {
        let spec = ARProcessSpec { p: 0.0, ..ARProcessSpec::default() };
        assert!(spec.coefficients().iter().flatten().all(|&v| v == 0.0));
        let s = simulate_ar_process(&spec, 50, &grid(), 1).unwrap();
        assert_eq!(s.series.len(), 50);
    }

    #[test]
    fn simulated_slopes_respect_bound() {
        let spec = ARProcessSpec::default();
        let s = simulate_ar_process(&spec, 200, &grid(), 2).unwrap();
        let bound = spec.slope_bound();
        for d in &s.series {
            let v = log_map(&s.mean, d).unwrap();
            assert!(max_tangent_slope(&s.mean, v.vals()) <= bound + 1e-8);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = ARProcessSpec::default();
        let a = simulate_ar_process(&spec, 10, &grid(), 3).unwrap();
        let b = simulate_ar_process(&spec, 10, &grid(), 3).unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let g = grid();
        let d = DistributionQ::from_quantile_fn(Arc::clone(&g), |p| p).unwrap();
        let series = vec![d; 10];
        assert!(matches!(
            fit_ar(&series, &TruncationChoice::cv(None)),
            Err(Error::DegenerateDesign(_))
        ));
        assert!(matches!(
            fit_ar(&series[..3], &TruncationChoice::cv(None)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn forecasts_from_mean_stay_at_mean() {
        let spec = ARProcessSpec::default();
        let s = simulate_ar_process(&spec, 100, &grid(), 4).unwrap();
        let fit = fit_ar(&s.series, &TruncationChoice::cv(None)).unwrap();
        let (f, eta) = fit.forecast_one(&fit.mean().mean).unwrap();
        assert_eq!(eta, 1.0);
        assert!(wasserstein_distance(&f, &fit.mean().mean).unwrap() < 1e-15);
        let roll = fit.forecast_rolling(&s.series[99], 3).unwrap();
        assert_eq!(roll[0].0, fit.forecast_one(&s.series[99]).unwrap().0);
        assert!(fit.holdout_error().is_some());
    }

    #[test]
    fn shift_equivariance() {
        let spec = ARProcessSpec::default();
        let s = simulate_ar_process(&spec, 60, &grid(), 5).unwrap();
        let shifted: Vec<DistributionQ> = s.series.iter().map(|d| d.shifted(3.0)).collect();
        let trunc = TruncationChoice::fixed(2, 2);
        let a = fit_ar(&s.series, &trunc).unwrap();
        let b = fit_ar(&shifted, &trunc).unwrap();
        for (ra, rb) in a.coefficients().iter().zip(b.coefficients()) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
