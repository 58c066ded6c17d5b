//! Distribution-to-distribution regression.
//!
//! Predictors and responses are log-mapped at their Fréchet means; the
//! regression operator between the two tangent spaces is estimated from the
//! leading eigenfunctions of each side as
//! `b_jk = lambda_j^{-1} n^{-1} sum_i <X_i, phi_j> <Y_i, psi_k>`.

use std::borrow::Borrow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{wasserstein_distance, DistributionQ};
use crate::error::{Error, Result};
use crate::geometry::{exp_map, log_map, OperatorKernel, TangentVector};
use crate::truncation::{argmin_parsimonious, cmp_slices, fold_labels, TruncMethod, TruncationChoice};
use crate::wfpca::{eigen_from_logs, frechet_mean, log_maps, recentered, EigenSystem, FrechetMean, MAX_EIGEN};

/// Per-training-unit fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Projection factor of each in-sample prediction (1 when no projection was needed).
    pub eta: Vec<f64>,
    /// `d_W(fitted_i, response_i)`.
    pub discrepancy: Vec<f64>,
}

/// Fitted distribution-to-distribution regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct D2DFit {
    predictor_mean: FrechetMean,
    response_mean: FrechetMean,
    es_x: EigenSystem,
    es_y: EigenSystem,
    j: usize,
    k: usize,
    /// `b[j][k]`.
    b: Vec<Vec<f64>>,
    /// `xi[j][k]`.
    xi: Vec<Vec<f64>>,
    trunc: TruncationChoice,
    diagnostics: FitDiagnostics,
}

/// A prediction and its projection factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dist: DistributionQ,
    pub eta: f64,
}

impl D2DFit {
    pub fn predictor_mean(&self) -> &FrechetMean {
        &self.predictor_mean
    }

    pub fn response_mean(&self) -> &FrechetMean {
        &self.response_mean
    }

    pub fn es_x(&self) -> &EigenSystem {
        &self.es_x
    }

    pub fn es_y(&self) -> &EigenSystem {
        &self.es_y
    }

    /// Predictor-side truncation.
    pub fn j(&self) -> usize {
        self.j
    }

    /// Response-side truncation.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn cross_scores(&self) -> &[Vec<f64>] {
        &self.xi
    }

    pub fn truncation(&self) -> &TruncationChoice {
        &self.trunc
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn grid_len(&self) -> usize {
        self.predictor_mean.mean.len()
    }

    /// The fitted operator as a kernel between the two tangent spaces.
    pub fn kernel(&self) -> OperatorKernel {
        OperatorKernel::new(
            Arc::clone(&self.predictor_mean.mean),
            Arc::clone(&self.response_mean.mean),
            self.es_x.eigenfunctions()[..self.j].to_vec(),
            self.es_y.eigenfunctions()[..self.k].to_vec(),
            self.b.clone(),
        )
        .expect("fitted bases are atomless and share a grid")
    }

    /// `Gamma(Log predictor)` before any projection.
    pub fn tangent_prediction(&self, predictor: &DistributionQ) -> Result<TangentVector> {
        let x = log_map(&self.predictor_mean.mean, predictor)?;
        let sx = self.es_x.scores_of(x.vals(), self.j)?;
        Ok(TangentVector::from_parts(
            Arc::clone(&self.response_mean.mean),
            self.apply_scores(&sx),
        ))
    }

    fn apply_scores(&self, sx: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = (0..self.k)
            .map(|k| sx.iter().zip(&self.b).map(|(s, row)| s * row[k]).sum())
            .collect();
        self.es_y.reconstruct(&c)
    }

    pub fn predict(&self, predictor: &DistributionQ) -> Result<Prediction> {
        let g = self.tangent_prediction(predictor)?;
        let (g, eta) = boundary_projection(&g);
        Ok(Prediction {
            dist: exp_map(&g)?,
            eta,
        })
    }
}

/// Largest `eta` in `[0, 1]` keeping `eta * g + id` non-decreasing, and `eta * g`.
///
/// On each grid segment the constraint is `dq_k + eta * dg_k >= 0`, which only
/// binds where `dg_k < 0`.
pub fn boundary_projection(g: &TangentVector) -> (TangentVector, f64) {
    let eta = projection_factor(g.base().qvals(), g.vals());
    if eta == 1.0 {
        (g.clone(), 1.0)
    } else {
        (g.scaled(eta), eta)
    }
}

pub(crate) fn projection_factor(base: &[f64], vals: &[f64]) -> f64 {
    let mut eta = 1.0_f64;
    for (q, v) in base.windows(2).zip(vals.windows(2)) {
        let dg = v[1] - v[0];
        if dg < 0.0 {
            let dq = q[1] - q[0];
            eta = eta.min(dq / -dg);
        }
    }
    eta.max(0.0)
}

fn scores_matrix(es: &EigenSystem, logs: &[TangentVector], count: usize) -> Vec<Vec<f64>> {
    logs.iter()
        .map(|v| es.scores_of(v.vals(), count).expect("count within eigensystem"))
        .collect()
}

/// `xi[j][k] = n^{-1} sum_i sx[i][j] sy[i][k]` and `b = xi / lambda_j`.
fn coefficients(
    sx: &[Vec<f64>],
    sy: &[Vec<f64>],
    lambda: &[f64],
    j: usize,
    k: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = sx.len() as f64;
    let xi: Vec<Vec<f64>> = (0..j)
        .map(|a| {
            (0..k)
                .map(|c| sx.iter().zip(sy).map(|(x, y)| x[a] * y[c]).sum::<f64>() / n)
                .collect()
        })
        .collect();
    let b = xi
        .iter()
        .zip(lambda)
        .map(|(row, l)| row.iter().map(|x| x / l).collect())
        .collect();
    (xi, b)
}

/// Training and held-out logs of one fold, both centred at the training mean.
fn split_by_fold(
    logs: &[TangentVector],
    labels: &[usize],
    fold: usize,
) -> (Vec<TangentVector>, Vec<TangentVector>) {
    let centred = recentered(logs, |i| labels[i] != fold);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (v, &l) in centred.into_iter().zip(labels) {
        if l == fold {
            test.push(v);
        } else {
            train.push(v);
        }
    }
    (train, test)
}

fn response_count_cv(logs_y: &[TangentVector], labels: &[usize], folds: usize, kmax: usize) -> usize {
    let mut errs = vec![0.0; kmax];
    for f in 0..folds {
        let (train, test) = split_by_fold(logs_y, labels, f);
        let Ok(ey) = eigen_from_logs(&train, MAX_EIGEN) else {
            continue;
        };
        let avail = ey.numerical_rank().min(kmax);
        for v in test {
            let s = ey.scores_of(v.vals(), avail).expect("within rank");
            let mut resid = v.norm().powi(2);
            let mut si = s.iter();
            for e in errs.iter_mut() {
                if let Some(x) = si.next() {
                    resid -= x * x;
                }
                *e += resid.max(0.0);
            }
        }
    }
    argmin_parsimonious(&errs) + 1
}

fn predictor_count_cv(
    logs_x: &[TangentVector],
    logs_y: &[TangentVector],
    labels: &[usize],
    folds: usize,
    jmax: usize,
    k: usize,
) -> usize {
    let mut errs = vec![0.0; jmax];
    for f in 0..folds {
        let (train_x, test_x) = split_by_fold(logs_x, labels, f);
        let (train_y, test_y) = split_by_fold(logs_y, labels, f);
        let (Ok(ex), Ok(ey)) = (
            eigen_from_logs(&train_x, MAX_EIGEN),
            eigen_from_logs(&train_y, MAX_EIGEN),
        ) else {
            continue;
        };
        let jf = ex.rank().min(jmax);
        let kf = ey.numerical_rank().min(k);
        let tx = scores_matrix(&ex, &train_x, jf);
        let ty = scores_matrix(&ey, &train_y, kf);
        let (_, b) = coefficients(&tx, &ty, ex.eigenvalues(), jf, kf);
        for (x, y) in test_x.iter().zip(&test_y) {
            let sx = ex.scores_of(x.vals(), jf).expect("within rank");
            let sy = ey.scores_of(y.vals(), kf).expect("within rank");
            let ny = y.norm().powi(2);
            let mut c = vec![0.0; kf];
            for (jj, e) in errs.iter_mut().enumerate() {
                if jj < jf {
                    for (ck, bk) in c.iter_mut().zip(&b[jj]) {
                        *ck += bk * sx[jj];
                    }
                }
                let cross: f64 = c.iter().zip(&sy).map(|(a, b)| a * b).sum();
                let sq: f64 = c.iter().map(|a| a * a).sum();
                *e += ny - 2.0 * cross + sq;
            }
        }
    }
    argmin_parsimonious(&errs) + 1
}

/// Chooses `(J, K)`: `K` first (FVE or CV reconstruction error), then `J` by
/// CV prediction error of the response logs given `K`.
///
/// `logs_*` are the full-sample logs at the Fréchet means and `es_*` their
/// eigensystems. Fold assignment depends on the data only, not on the order
/// of the sample.
pub fn select_truncation(
    logs_x: &[TangentVector],
    logs_y: &[TangentVector],
    es_x: &EigenSystem,
    es_y: &EigenSystem,
    trunc: &TruncationChoice,
) -> Result<(usize, usize)> {
    trunc.validate()?;
    if logs_x.len() != logs_y.len() {
        return Err(Error::LengthMismatch(logs_x.len(), logs_y.len()));
    }
    let rank_x = es_x.rank();
    if rank_x == 0 {
        return Err(Error::DegenerateDesign(
            "predictor covariance has no positive eigenvalue".into(),
        ));
    }
    if let TruncMethod::Fixed { j, k } = trunc.method {
        let jn = j.min(es_x.numerical_rank());
        let kn = k.min(es_y.numerical_rank());
        if (jn, kn) != (j, k) {
            log::warn!("fixed truncation ({j},{k}) clamped to numerical ranks ({jn},{kn})");
        }
        return Ok((jn, kn));
    }
    let n = logs_x.len();
    let folds = trunc.effective_folds(n);
    let labels = fold_labels(n, folds, trunc.seed, |a, b| {
        cmp_slices(logs_x[a].vals(), logs_x[b].vals())
            .then_with(|| cmp_slices(logs_y[a].vals(), logs_y[b].vals()))
    });
    let rank_y = es_y.rank();
    let k = if rank_y == 0 {
        0
    } else {
        match trunc.method {
            TruncMethod::Fve => es_y.fve_count(trunc.alpha),
            _ => response_count_cv(logs_y, &labels, folds, rank_y.min(MAX_EIGEN)),
        }
    };
    let j = predictor_count_cv(logs_x, logs_y, &labels, folds, rank_x.min(MAX_EIGEN), k);
    Ok((j, k))
}

/// Fits the regression of `responses` on `predictors`.
pub fn fit_d2d<D: Borrow<DistributionQ>>(
    predictors: &[D],
    responses: &[D],
    trunc: &TruncationChoice,
) -> Result<D2DFit> {
    let n = predictors.len();
    if n != responses.len() {
        return Err(Error::LengthMismatch(n, responses.len()));
    }
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    trunc.validate()?;
    let predictor_mean = frechet_mean(predictors)?;
    let response_mean = frechet_mean(responses)?;
    predictor_mean.mean.check_grid(&response_mean.mean)?;
    let logs_x = log_maps(&predictor_mean.mean, predictors)?;
    let logs_y = log_maps(&response_mean.mean, responses)?;
    let es_x = eigen_from_logs(&logs_x, MAX_EIGEN)?;
    let es_y = eigen_from_logs(&logs_y, MAX_EIGEN)?;
    let (j, k) = select_truncation(&logs_x, &logs_y, &es_x, &es_y, trunc)?;
    let sx = scores_matrix(&es_x, &logs_x, j);
    let sy = scores_matrix(&es_y, &logs_y, k);
    let (xi, b) = coefficients(&sx, &sy, es_x.eigenvalues(), j, k);
    let mut fit = D2DFit {
        predictor_mean,
        response_mean,
        es_x,
        es_y,
        j,
        k,
        b,
        xi,
        trunc: *trunc,
        diagnostics: FitDiagnostics {
            eta: Vec::new(),
            discrepancy: Vec::new(),
        },
    };
    let mut eta = Vec::with_capacity(n);
    let mut discrepancy = Vec::with_capacity(n);
    for (x, y) in predictors.iter().zip(responses) {
        let p = fit.predict(x.borrow())?;
        eta.push(p.eta);
        discrepancy.push(wasserstein_distance(&p.dist, y.borrow())?);
    }
    fit.diagnostics = FitDiagnostics { eta, discrepancy };
    Ok(fit)
}

/// Prediction at a new predictor, with its projection factor.
pub fn predict_d2d(fit: &D2DFit, predictor: &DistributionQ) -> Result<(DistributionQ, f64)> {
    let p = fit.predict(predictor)?;
    Ok((p.dist, p.eta))
}

/// Out-of-sample evaluation against known targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AwdEvaluation {
    /// Mean Wasserstein discrepancy.
    pub awd: f64,
    /// Projection factor per prediction.
    pub etas: Vec<f64>,
}

impl AwdEvaluation {
    /// Number of predictions that needed boundary projection.
    pub fn eta_events(&self) -> usize {
        self.etas.iter().filter(|&&e| e < 1.0).count()
    }
}

/// Mean of `d_W(target_i, prediction_i)` over new predictors.
pub fn evaluate_awd(
    fit: &D2DFit,
    new_predictors: &[DistributionQ],
    targets: &[DistributionQ],
) -> Result<f64> {
    Ok(evaluate_awd_detailed(fit, new_predictors, targets)?.awd)
}

pub fn evaluate_awd_detailed(
    fit: &D2DFit,
    new_predictors: &[DistributionQ],
    targets: &[DistributionQ],
) -> Result<AwdEvaluation> {
    if new_predictors.len() != targets.len() {
        return Err(Error::LengthMismatch(new_predictors.len(), targets.len()));
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    let mut etas = Vec::with_capacity(targets.len());
    for (x, t) in new_predictors.iter().zip(targets) {
        let p = fit.predict(x)?;
        total += wasserstein_distance(t, &p.dist)?;
        etas.push(p.eta);
    }
    Ok(AwdEvaluation {
        awd: total / targets.len() as f64,
        etas,
    })
}

/// Mean Wasserstein distance between paired lists.
pub fn average_wasserstein(a: &[DistributionQ], b: &[DistributionQ]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += wasserstein_distance(x, y)?;
    }
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ProbGrid;
    use crate::special::normal_quantile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize) -> Arc<ProbGrid> {
        Arc::new(ProbGrid::midpoint(m).unwrap())
    }

    /// Gaussian pairs with response mean and spread linear in the predictor's.
    fn gaussian_pairs(g: &Arc<ProbGrid>, n: usize, seed: u64) -> (Vec<DistributionQ>, Vec<DistributionQ>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let u: f64 = rng.random_range(-1.0..1.0);
            let s: f64 = rng.random_range(0.5..1.5);
            let e: f64 = rng.random_range(-0.1..0.1);
            xs.push(DistributionQ::from_quantile_fn(Arc::clone(g), |p| u + s * normal_quantile(p)).unwrap());
            ys.push(
                DistributionQ::from_quantile_fn(Arc::clone(g), |p| 1.0 + 0.5 * u + e + (0.5 + 0.5 * s) * normal_quantile(p))
                    .unwrap(),
            );
        }
        (xs, ys)
    }

    #[test]
    fn projection_examples() {
        let g = grid(5);
        let base = Arc::new(DistributionQ::new(Arc::clone(&g), vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap());
        let v = TangentVector::new(Arc::clone(&base), vec![0.0, 0.0, -2.0, -2.0, -2.0]).unwrap();
        let (p, eta) = boundary_projection(&v);
        assert_eq!(eta, 0.5);
        assert_eq!(p.vals(), &[0.0, 0.0, -1.0, -1.0, -1.0]);

        let ok = TangentVector::new(Arc::clone(&base), vec![0.0, 0.5, 0.5, 1.0, 3.0]).unwrap();
        let (p, eta) = boundary_projection(&ok);
        assert_eq!(eta, 1.0);
        assert_eq!(p, ok);
        let (_, eta) = boundary_projection(&TangentVector::zero(base).unwrap());
        assert_eq!(eta, 1.0);
    }

    #[test]
    fn constant_response_gives_zero_operator() {
        let g = grid(100);
        let (xs, _) = gaussian_pairs(&g, 10, 1);
        let y0 = DistributionQ::from_quantile_fn(Arc::clone(&g), normal_quantile).unwrap();
        let ys = vec![y0.clone(); 10];
        let fit = fit_d2d(&xs, &ys, &TruncationChoice::default()).unwrap();
        assert_eq!(fit.k(), 0);
        for x in &xs {
            let (p, eta) = predict_d2d(&fit, x).unwrap();
            assert_eq!(eta, 1.0);
            assert!(wasserstein_distance(&p, &y0).unwrap() < 1e-12);
        }
    }

    #[test]
    fn mean_predictor_maps_to_mean_response() {
        let g = grid(200);
        let (xs, ys) = gaussian_pairs(&g, 40, 2);
        let fit = fit_d2d(&xs, &ys, &TruncationChoice::default()).unwrap();
        let (p, eta) = predict_d2d(&fit, &fit.predictor_mean().mean).unwrap();
        assert_eq!(eta, 1.0);
        assert_eq!(p, *fit.response_mean().mean);
    }

    #[test]
    fn recovers_gaussian_location_scale_map() {
        let g = grid(200);
        let (xs, ys) = gaussian_pairs(&g, 60, 3);
        let fit = fit_d2d(&xs, &ys, &TruncationChoice::default()).unwrap();
        assert!(fit.j() >= 2 && fit.k() >= 2);
        let x = DistributionQ::from_quantile_fn(Arc::clone(&g), |p| 0.4 + 1.2 * normal_quantile(p)).unwrap();
        let want = DistributionQ::from_quantile_fn(Arc::clone(&g), |p| 1.2 + 1.1 * normal_quantile(p)).unwrap();
        let (p, _) = predict_d2d(&fit, &x).unwrap();
        assert!(wasserstein_distance(&p, &want).unwrap() < 0.03);
    }

    #[test]
    fn sign_flips_do_not_change_predictions() {
        let g = grid(150);
        let (xs, ys) = gaussian_pairs(&g, 25, 4);
        let fit = fit_d2d(&xs, &ys, &TruncationChoice::fixed(2, 2)).unwrap();
        let mut flipped = fit.clone();
        flipped.es_x.flip_sign(0);
        flipped.es_y.flip_sign(1);
        for row in flipped.b.iter_mut().take(1) {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        for row in flipped.b.iter_mut() {
            row[1] = -row[1];
        }
        let a = fit.kernel().dense();
        let b = flipped.kernel().dense();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        for x in &xs[..5] {
            let pa = fit.predict(x).unwrap().dist;
            let pb = flipped.predict(x).unwrap().dist;
            assert!(wasserstein_distance(&pa, &pb).unwrap() < 1e-10);
        }
    }

    #[test]
    fn permutation_invariance() {
        let g = grid(100);
        let (xs, ys) = gaussian_pairs(&g, 40, 5);
        let trunc = TruncationChoice::cv(None).with_seed(11);
        let a = fit_d2d(&xs, &ys, &trunc).unwrap();
        let mut idx: Vec<usize> = (0..40).collect();
        idx.shuffle_with(&mut ChaCha8Rng::seed_from_u64(3));
        let xs2: Vec<_> = idx.iter().map(|&i| xs[i].clone()).collect();
        let ys2: Vec<_> = idx.iter().map(|&i| ys[i].clone()).collect();
        let b = fit_d2d(&xs2, &ys2, &trunc).unwrap();
        assert_eq!((a.j(), a.k()), (b.j(), b.k()));
        let ka = a.kernel();
        let kb = b.kernel().transport(ka.input_base(), ka.output_base()).unwrap();
        let d = ka.hs_distance(&kb).unwrap();
        assert!(d < 1e-9, "{d} {} {}", a.j(), a.k());
    }

    trait ShuffleWith {
        fn shuffle_with(&mut self, rng: &mut ChaCha8Rng);
    }
    impl ShuffleWith for Vec<usize> {
        fn shuffle_with(&mut self, rng: &mut ChaCha8Rng) {
            use rand::seq::SliceRandom;
            self.shuffle(rng);
        }
    }

    #[test]
    fn degenerate_and_short_inputs() {
        let g = grid(50);
        let x = DistributionQ::from_quantile_fn(Arc::clone(&g), normal_quantile).unwrap();
        let xs = vec![x.clone(); 5];
        let (_, ys) = gaussian_pairs(&g, 5, 6);
        assert!(matches!(
            fit_d2d(&xs, &ys, &TruncationChoice::default()),
            Err(Error::DegenerateDesign(_))
        ));
        assert!(matches!(
            fit_d2d(&xs[..2], &ys[..2], &TruncationChoice::default()),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_d2d(&xs[..3], &ys[..2], &TruncationChoice::default()),
            Err(Error::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn awd_of_shifted_targets() {
        let g = grid(100);
        let (xs, ys) = gaussian_pairs(&g, 12, 7);
        let fit = fit_d2d(&xs, &ys, &TruncationChoice::default()).unwrap();
        let preds: Vec<DistributionQ> = xs.iter().map(|x| fit.predict(x).unwrap().dist).collect();
        assert_eq!(evaluate_awd(&fit, &xs, &preds).unwrap(), 0.0);
        let shifted: Vec<DistributionQ> = preds.iter().map(|p| p.shifted(0.25)).collect();
        assert!((evaluate_awd(&fit, &xs, &shifted).unwrap() - 0.25).abs() < 1e-12);
    }
}
