//! Fréchet means, covariance operators of log-mapped distributions, and their
//! eigendecompositions in the base measure's inner product.

use std::borrow::Borrow;
use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionQ;
use crate::error::{Error, Result};
use crate::geometry::{check_base, log_map, TangentVector};

/// Default cap on the number of retained eigenpairs.
pub const MAX_EIGEN: usize = 50;

/// Eigenvalues below this fraction of the leading one are not used as
/// truncation candidates.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Empirical Fréchet mean of a sample of distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetMean {
    pub mean: Arc<DistributionQ>,
    pub n: usize,
}

/// Pointwise average of quantile functions.
///
/// Summation runs in sample order followed by one division, so the result is
/// reproducible bit-for-bit.
pub fn frechet_mean<D: Borrow<DistributionQ>>(ds: &[D]) -> Result<FrechetMean> {
    let first = ds
        .first()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?
        .borrow();
    let mut acc = vec![0.0; first.len()];
    for d in ds {
        let d = d.borrow();
        first.check_grid(d)?;
        for (a, q) in acc.iter_mut().zip(d.qvals()) {
            *a += q;
        }
    }
    let n = ds.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(FrechetMean {
        mean: Arc::new(DistributionQ::new(Arc::clone(first.grid()), acc)?),
        n: ds.len(),
    })
}

/// Log maps of every distribution at a common base.
pub fn log_maps<D: Borrow<DistributionQ>>(
    base: &Arc<DistributionQ>,
    ds: &[D],
) -> Result<Vec<TangentVector>> {
    ds.iter().map(|d| log_map(base, d.borrow())).collect()
}

/// Integral operator on tangent vectors represented by its kernel on grid pairs.
#[derive(Debug, Clone)]
pub struct CovOperator {
    row_base: Arc<DistributionQ>,
    col_base: Arc<DistributionQ>,
    kernel: Mat<f64>,
}

impl CovOperator {
    pub fn row_base(&self) -> &Arc<DistributionQ> {
        &self.row_base
    }

    pub fn col_base(&self) -> &Arc<DistributionQ> {
        &self.col_base
    }

    pub fn dim(&self) -> usize {
        self.kernel.nrows()
    }

    /// `C(F^{-1}(p_k), F^{-1}(p_l))`.
    pub fn kernel(&self, k: usize, l: usize) -> f64 {
        self.kernel[(k, l)]
    }

    /// `sum_k w_k C(k, k)`.
    pub fn weighted_trace(&self) -> f64 {
        let w = self.row_base.grid().weights();
        (0..self.dim()).map(|k| w[k] * self.kernel[(k, k)]).sum()
    }

    /// `max |C - C^T|`.
    pub fn asymmetry(&self) -> f64 {
        let m = self.dim();
        let mut worst = 0.0_f64;
        for k in 0..m {
            for l in 0..k {
                worst = worst.max((self.kernel[(k, l)] - self.kernel[(l, k)]).abs());
            }
        }
        worst
    }
}

fn stack_columns(vs: &[TangentVector]) -> Mat<f64> {
    let m = vs[0].len();
    Mat::from_fn(m, vs.len(), |k, i| vs[i].vals()[k])
}

fn common_base(vs: &[TangentVector]) -> Result<&Arc<DistributionQ>> {
    let base = vs
        .first()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?
        .base();
    for v in &vs[1..] {
        check_base(base, v.base())?;
    }
    Ok(base)
}

/// Logs re-centred at the mean of the units selected by `keep`.
///
/// At a common base this is the log map at the Fréchet mean of the selected
/// units, carried back to the original base. Cross-validation uses it so a
/// held-out unit never enters the centring of its own training fold.
pub(crate) fn recentered(logs: &[TangentVector], keep: impl Fn(usize) -> bool) -> Vec<TangentVector> {
    let m = logs.first().map_or(0, |v| v.len());
    let mut mean = vec![0.0; m];
    let mut count = 0usize;
    for (i, v) in logs.iter().enumerate() {
        if keep(i) {
            count += 1;
            for (a, x) in mean.iter_mut().zip(v.vals()) {
                *a += x;
            }
        }
    }
    let c = count.max(1) as f64;
    mean.iter_mut().for_each(|a| *a /= c);
    logs.iter()
        .map(|v| {
            let vals = v.vals().iter().zip(&mean).map(|(x, a)| x - a).collect();
            TangentVector::from_parts(Arc::clone(v.base()), vals)
        })
        .collect()
}

/// `C = n^{-1} sum_i v_i (x) v_i`.
pub fn covariance(logs: &[TangentVector]) -> Result<CovOperator> {
    let base = common_base(logs)?;
    let x = stack_columns(logs);
    let kernel = (&x * x.transpose()) / (logs.len() as f64);
    let mut kernel = kernel;
    // The product is symmetric up to rounding; make it exactly so.
    let m = kernel.nrows();
    for k in 0..m {
        for l in 0..k {
            let avg = 0.5 * (kernel[(k, l)] + kernel[(l, k)]);
            kernel[(k, l)] = avg;
            kernel[(l, k)] = avg;
        }
    }
    Ok(CovOperator {
        row_base: Arc::clone(base),
        col_base: Arc::clone(base),
        kernel,
    })
}

/// `C_XY = n^{-1} sum_i u_i (x) v_i` with rows indexed by the response grid.
pub fn cross_covariance(logs_x: &[TangentVector], logs_y: &[TangentVector]) -> Result<CovOperator> {
    if logs_x.len() != logs_y.len() {
        return Err(Error::LengthMismatch(logs_x.len(), logs_y.len()));
    }
    let bx = common_base(logs_x)?;
    let by = common_base(logs_y)?;
    bx.check_grid(by)?;
    let x = stack_columns(logs_x);
    let y = stack_columns(logs_y);
    let kernel = (&y * x.transpose()) / (logs_x.len() as f64);
    Ok(CovOperator {
        row_base: Arc::clone(by),
        col_base: Arc::clone(bx),
        kernel,
    })
}

/// Eigenvalues and orthonormal eigenfunctions of a covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    base: Arc<DistributionQ>,
    eigenvalues: Vec<f64>,
    /// `eigenfunctions[j]` holds `phi_j` in quantile coordinates.
    eigenfunctions: Vec<Vec<f64>>,
    fve: Vec<f64>,
    total_variance: f64,
}

impl EigenSystem {
    fn assemble(
        base: Arc<DistributionQ>,
        eigenvalues: Vec<f64>,
        mut eigenfunctions: Vec<Vec<f64>>,
        total_variance: f64,
    ) -> Self {
        for phi in &mut eigenfunctions {
            fix_sign(phi);
        }
        let mut acc = 0.0;
        let fve = eigenvalues
            .iter()
            .map(|l| {
                acc += l;
                if total_variance > 0.0 {
                    (acc / total_variance).min(1.0)
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            base,
            eigenvalues,
            eigenfunctions,
            fve,
            total_variance,
        }
    }

    pub fn base(&self) -> &Arc<DistributionQ> {
        &self.base
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Vec<f64>] {
        &self.eigenfunctions
    }

    pub fn eigenfunction(&self, j: usize) -> &[f64] {
        &self.eigenfunctions[j]
    }

    /// Cumulative fraction of variance explained by the first `j + 1` components.
    pub fn fve(&self) -> &[f64] {
        &self.fve
    }

    /// Weighted trace of the operator, including discarded components.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Number of stored eigenpairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues above the relative cutoff [`RANK_CUTOFF`].
    pub fn rank(&self) -> usize {
        let Some(&l1) = self.eigenvalues.first() else {
            return 0;
        };
        self.eigenvalues
            .iter()
            .take_while(|&&l| l > 0.0 && l >= RANK_CUTOFF * l1)
            .count()
    }

    /// Number of eigenvalues that are numerically nonzero.
    pub fn numerical_rank(&self) -> usize {
        self.eigenvalues.iter().take_while(|&&l| l > 0.0).count()
    }

    /// Smallest count whose cumulative FVE reaches `1 - alpha`, capped at [`Self::rank`].
    pub fn fve_count(&self, alpha: f64) -> usize {
        let rank = self.rank();
        let target = 1.0 - alpha;
        self.fve[..rank]
            .iter()
            .position(|&f| f >= target - 1e-12)
            .map_or(rank, |j| j + 1)
    }

    /// `<v, phi_j>` for `j < count`.
    pub fn scores(&self, v: &TangentVector, count: usize) -> Result<Vec<f64>> {
        check_base(v.base(), &self.base)?;
        self.scores_of(v.vals(), count)
    }

    pub(crate) fn scores_of(&self, vals: &[f64], count: usize) -> Result<Vec<f64>> {
        if count > self.len() {
            return Err(Error::TooManyComponents {
                requested: count,
                available: self.len(),
            });
        }
        let grid = self.base.grid();
        Ok(self.eigenfunctions[..count]
            .iter()
            .map(|phi| grid.dot(phi, vals))
            .collect())
    }

    /// `sum_j scores[j] phi_j`.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.base.len()];
        for (s, phi) in scores.iter().zip(&self.eigenfunctions) {
            for (o, p) in out.iter_mut().zip(phi) {
                *o += s * p;
            }
        }
        out
    }

    /// Flips the sign of eigenfunction `j`.
    pub fn flip_sign(&mut self, j: usize) {
        for v in &mut self.eigenfunctions[j] {
            *v = -*v;
        }
    }

    /// Same eigensystem relabelled to a new base (parallel transport).
    pub fn transported(&self, base: &Arc<DistributionQ>) -> Result<Self> {
        self.base.check_grid(base)?;
        base.require_atomless()?;
        Ok(Self {
            base: Arc::clone(base),
            ..self.clone()
        })
    }
}

/// Log-map values are differences of quantiles, so anything below a few
/// ulps of the quantile scale is rounding noise (e.g. from averaging
/// identical distributions).
const NOISE_FACTOR: f64 = 64.0;

fn value_scale(base: &DistributionQ) -> f64 {
    base.qvals().iter().fold(f64::MIN_POSITIVE, |m, q| m.max(q.abs()))
}

/// Largest-magnitude entry made positive.
fn fix_sign(phi: &mut [f64]) {
    let pivot = phi
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        for v in phi.iter_mut() {
            *v = -*v;
        }
    }
}

/// Eigendecomposition of an auto-covariance operator via the symmetric
/// similarity transform `diag(sqrt w) C diag(sqrt w)`.
pub fn eigendecompose(c: &CovOperator) -> Result<EigenSystem> {
    check_base(&c.row_base, &c.col_base)?;
    let scale = (0..c.dim())
        .flat_map(|k| (0..c.dim()).map(move |l| (k, l)))
        .fold(0.0_f64, |m, (k, l)| m.max(c.kernel[(k, l)].abs()));
    let asym = c.asymmetry();
    if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric { max_diff: asym });
    }
    let w = c.row_base.grid().weights();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let m = c.dim();
    let s = Mat::from_fn(m, m, |k, l| sw[k] * c.kernel[(k, l)] * sw[l]);
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let vals = evd.S().column_vector();
    let u = evd.U();
    let total: f64 = (0..m).map(|j| vals[j].max(0.0)).sum();
    let l1 = vals[m - 1].max(0.0);
    let floor = (l1 * m as f64 * f64::EPSILON).max((NOISE_FACTOR * value_scale(&c.row_base) * f64::EPSILON).powi(2));
    let keep = m.min(MAX_EIGEN);
    let mut eigenvalues = Vec::with_capacity(keep);
    let mut eigenfunctions = Vec::with_capacity(keep);
    // faer returns ascending eigenvalues.
    for j in (m - keep..m).rev() {
        let l = vals[j];
        eigenvalues.push(if l > floor { l } else { 0.0 });
        eigenfunctions.push((0..m).map(|k| u[(k, j)] / sw[k]).collect());
    }
    Ok(EigenSystem::assemble(
        Arc::clone(&c.row_base),
        eigenvalues,
        eigenfunctions,
        total,
    ))
}

/// Eigensystem of `n^{-1} sum_i v_i (x) v_i` computed from the thin SVD of the
/// weighted data matrix, without forming the `M x M` kernel.
///
/// Keeps at most `cap` components and drops singular values at rounding level.
pub fn eigen_from_logs(logs: &[TangentVector], cap: usize) -> Result<EigenSystem> {
    let base = common_base(logs)?;
    let w = base.grid().weights();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let n = logs.len();
    let m = base.len();
    let rn = (n as f64).sqrt();
    let z = Mat::from_fn(m, n, |k, i| sw[k] * logs[i].vals()[k] / rn);
    let total: f64 = (0..n)
        .map(|i| (0..m).map(|k| z[(k, i)] * z[(k, i)]).sum::<f64>())
        .sum();
    let svd = z
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let r = s.nrows();
    let s1 = if r > 0 { s[0] } else { 0.0 };
    let floor = (s1 * (n.max(m) as f64)).max(NOISE_FACTOR * value_scale(base)) * f64::EPSILON;
    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    for j in 0..r.min(cap) {
        if s[j].is_nan() || s[j] <= floor {
            break;
        }
        eigenvalues.push(s[j] * s[j]);
        eigenfunctions.push((0..m).map(|k| u[(k, j)] / sw[k]).collect());
    }
    Ok(EigenSystem::assemble(
        Arc::clone(base),
        eigenvalues,
        eigenfunctions,
        total,
    ))
}

/// `<v, phi_j>` for the first `count` eigenfunctions.
pub fn project_scores(v: &TangentVector, es: &EigenSystem, count: usize) -> Result<Vec<f64>> {
    es.scores(v, count)
}
