//! Data generators.
//!
//! The sine-basis construction builds predictor logs `sum_j chi_j phi_j o F1`
//! with coefficients small enough that every log stays in the log image, maps
//! them through a known operator, and optionally distorts each response by a
//! random monotone map whose average is the identity. Because `phi_j o F` at
//! `F^{-1}(p)` equals `phi_j(p)`, all of this is tabulated directly on the
//! probability grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

use crate::distribution::{estimate_distribution, DistributionQ, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::OperatorKernel;
use crate::grid::ProbGrid;
use crate::special::{beta_quantile, gauss_legendre, normal_quantile, zeta};

use super::basis::{basis_table, basis_values, distortion_map, kappa, DISTORTION_LEVELS};
use super::config::{Case, CoefMode, SimConfig};
use super::refdist::RefDist;
use super::rng::{stream, Role, HOLDOUT_OFFSET};

/// Slack allowed on the analytic feasibility bound.
const BOUND_SLACK: f64 = 1e-12;

/// Tally of feasibility checks on generated logs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub checked: usize,
    pub violations: usize,
    /// Largest `sum_j |c_j| kappa_j D` seen; feasibility needs it `<= 1`.
    pub max_bound: f64,
}

impl FeasibilityAudit {
    fn record(&mut self, bound: f64, min_step: f64) {
        self.checked += 1;
        self.max_bound = self.max_bound.max(bound);
        if bound > 1.0 + BOUND_SLACK || min_step < 0.0 {
            self.violations += 1;
        }
    }

    pub fn merge(&mut self, other: &FeasibilityAudit) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.max_bound = self.max_bound.max(other.max_bound);
    }
}

/// Distribution-to-distribution data of one replicate.
#[derive(Debug, Clone)]
pub struct D2DDataset {
    pub train_x: Vec<DistributionQ>,
    pub train_y: Vec<DistributionQ>,
    pub new_x: Vec<DistributionQ>,
    /// Conditional Fréchet means at the new predictors.
    pub targets: Vec<DistributionQ>,
    pub audit: FeasibilityAudit,
}

/// Distribution-to-scalar data of one replicate.
#[derive(Debug, Clone)]
pub struct D2sDataset {
    pub train_x: Vec<DistributionQ>,
    pub train_y: Vec<f64>,
    pub new_x: Vec<DistributionQ>,
    /// `E(Y | predictor)` at the new predictors.
    pub oracle: Vec<f64>,
}

/// Fixed ingredients of the sine-basis construction.
#[derive(Debug, Clone)]
pub struct Framework {
    grid: Arc<ProbGrid>,
    x_ref: RefDist,
    y_ref: RefDist,
    d1: f64,
    d2: f64,
    x_mean: Arc<DistributionQ>,
    y_mean: Arc<DistributionQ>,
    /// `basis[j][k] = phi_{j+1}(p_k)`.
    basis: Vec<Vec<f64>>,
    chi_half: Vec<f64>,
    /// `b[j][k]`.
    b: Vec<Vec<f64>>,
    noise_half: Vec<f64>,
    distortion: bool,
}

impl Framework {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let (x_ref, y_ref) = cfg.case.reference_pair().ok_or_else(|| {
            Error::InvalidInput(format!("case {} is not a sine-basis case", cfg.case))
        })?;
        let grid = Arc::new(ProbGrid::midpoint(cfg.grid_m)?);
        let (d1, d2) = (x_ref.density_sup(), y_ref.density_sup());
        let x_mean = Arc::new(DistributionQ::from_quantile_fn(Arc::clone(&grid), |p| x_ref.quantile(p))?);
        let y_mean = Arc::new(DistributionQ::from_quantile_fn(Arc::clone(&grid), |p| y_ref.quantile(p))?);
        let r = cfg.rank;
        let idx = |j: usize| (j + 1) as f64;
        let upsilon: Vec<f64> = (0..r)
            .map(|j| match cfg.coef {
                CoefMode::Fig1 => 0.5f64.powi(j as i32 + 1),
                CoefMode::Powerlaw { a0, .. } => idx(j).powf(-a0),
            })
            .collect();
        let total: f64 = upsilon.iter().sum();
        let chi_half = (0..r).map(|j| upsilon[j] / (kappa(j + 1) * d1 * total)).collect();
        let b = (0..r)
            .map(|j| {
                (0..r)
                    .map(|k| match cfg.coef {
                        CoefMode::Fig1 => 0.5f64.powi(k as i32 + 1) * idx(j) / idx(k) * d1 / d2,
                        CoefMode::Powerlaw { p, a1, a2, .. } => {
                            p * idx(j).powf(1.0 - a1) * idx(k).powf(-a2 - 1.0) * d1 / (d2 * zeta(a2))
                        }
                    })
                    .collect()
            })
            .collect();
        let noise_half = (0..r)
            .map(|k| match cfg.coef {
                CoefMode::Fig1 => 0.0,
                CoefMode::Powerlaw { p, a2, .. } => {
                    (1.0 - p) * idx(k).powf(-a2) / (kappa(k + 1) * d2 * zeta(a2))
                }
            })
            .collect();
        Ok(Self {
            basis: basis_table(r, grid.points()),
            grid,
            x_ref,
            y_ref,
            d1,
            d2,
            x_mean,
            y_mean,
            chi_half,
            b,
            noise_half,
            distortion: cfg.distortion && cfg.coef == CoefMode::Fig1,
        })
    }

    pub fn grid(&self) -> &Arc<ProbGrid> {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Density sups `(D1, D2)` of the two means.
    pub fn density_sups(&self) -> (f64, f64) {
        (self.d1, self.d2)
    }

    pub fn predictor_mean(&self) -> &Arc<DistributionQ> {
        &self.x_mean
    }

    pub fn response_mean(&self) -> &Arc<DistributionQ> {
        &self.y_mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.b
    }

    /// Half-widths of the uniform predictor coefficients.
    pub fn coefficient_bounds(&self) -> &[f64] {
        &self.chi_half
    }

    /// Half-widths of the additive response noise (zero without noise).
    pub fn noise_bounds(&self) -> &[f64] {
        &self.noise_half
    }

    /// The generating operator in the sine basis.
    pub fn true_kernel(&self) -> Result<OperatorKernel> {
        OperatorKernel::new(
            Arc::clone(&self.x_mean),
            Arc::clone(&self.y_mean),
            self.basis.clone(),
            self.basis.clone(),
            self.b.clone(),
        )
    }

    /// Population response covariance in the sine basis.
    fn response_covariance(&self) -> Vec<Vec<f64>> {
        let r = self.rank();
        let var_chi: Vec<f64> = self.chi_half.iter().map(|h| h * h / 3.0).collect();
        (0..r)
            .map(|k| {
                (0..r)
                    .map(|l| {
                        let mut c: f64 = (0..r).map(|j| self.b[j][k] * var_chi[j] * self.b[j][l]).sum();
                        if k == l {
                            c += self.noise_half[k].powi(2) / 3.0;
                        }
                        c
                    })
                    .collect()
            })
            .collect()
    }

    /// The generating operator restricted to the leading `j` predictor and
    /// `k` response eigenfunctions of the population covariances.
    ///
    /// Predictor coefficients are independent with decreasing variances, so
    /// the predictor eigenfunctions are the sine basis itself.
    pub fn truncated_kernel(&self, j: usize, k: usize) -> Result<OperatorKernel> {
        let r = self.rank();
        if j > r || k > r {
            return Err(Error::TooManyComponents {
                requested: j.max(k),
                available: r,
            });
        }
        let cov = self.response_covariance();
        let evd = Mat::from_fn(r, r, |a, c| cov[a][c])
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let u = evd.U();
        // faer sorts ascending; column r - 1 - c is the c-th leading vector.
        let vcol = |l: usize, c: usize| u[(l, r - 1 - c)];
        let m = self.grid.len();
        let psi: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                (0..m)
                    .map(|p| (0..r).map(|l| vcol(l, c) * self.basis[l][p]).sum())
                    .collect()
            })
            .collect();
        let coef = (0..j)
            .map(|a| (0..k).map(|c| (0..r).map(|l| self.b[a][l] * vcol(l, c)).sum()).collect())
            .collect();
        OperatorKernel::new(
            Arc::clone(&self.x_mean),
            Arc::clone(&self.y_mean),
            self.basis[..j].to_vec(),
            psi,
            coef,
        )
    }

    fn draw_chi<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.chi_half.iter().map(|&h| rng.random_range(-h..=h)).collect()
    }

    fn response_coefs(&self, chi: &[f64]) -> Vec<f64> {
        (0..self.rank())
            .map(|k| chi.iter().zip(&self.b).map(|(c, row)| c * row[k]).sum())
            .collect()
    }

    fn tabulate(&self, mean: &DistributionQ, coefs: &[f64], map: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut q = mean.qvals().to_vec();
        for (c, phi) in coefs.iter().zip(&self.basis) {
            for (v, f) in q.iter_mut().zip(phi) {
                *v += c * f;
            }
        }
        q.iter_mut().for_each(|v| *v = map(*v));
        q
    }

    fn sample<R: Rng>(
        &self,
        rd: &RefDist,
        coefs: &[f64],
        m: usize,
        map: impl Fn(f64) -> f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut buf = vec![0.0; coefs.len()];
        (0..m)
            .map(|_| {
                let (x, u) = rd.sample_with_level(rng);
                basis_values(coefs.len(), u, &mut buf);
                map(x + coefs.iter().zip(&buf).map(|(c, f)| c * f).sum::<f64>())
            })
            .collect()
    }

    fn audit(&self, audit: &mut FeasibilityAudit, coefs: &[f64], d: f64, mean: &DistributionQ) {
        let bound: f64 = coefs.iter().enumerate().map(|(j, c)| c.abs() * kappa(j + 1) * d).sum();
        let q = self.tabulate(mean, coefs, |v| v);
        let min_step = q.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        audit.record(bound, min_step);
    }

    fn build(&self, m: Option<usize>, q: Vec<f64>, sample: impl FnOnce(usize) -> Vec<f64>) -> Result<DistributionQ> {
        match m {
            None => DistributionQ::new(Arc::clone(&self.grid), q),
            Some(m) => estimate_distribution(&SampleSet::new(sample(m))?, Arc::clone(&self.grid)),
        }
    }

    /// Predictor of one unit and its response-side coefficients.
    fn unit_predictor(
        &self,
        cfg: &SimConfig,
        replicate: u64,
        unit: u64,
        audit: &mut FeasibilityAudit,
    ) -> Result<(DistributionQ, Vec<f64>)> {
        let chi = self.draw_chi(&mut stream(cfg.seed, replicate, unit, Role::Coefficients));
        self.audit(audit, &chi, self.d1, &self.x_mean);
        let q = if cfg.m.is_none() {
            self.tabulate(&self.x_mean, &chi, |v| v)
        } else {
            Vec::new()
        };
        let x = self.build(cfg.m, q, |m| {
            let mut rng = stream(cfg.seed, replicate, unit, Role::PredictorSample);
            self.sample(&self.x_ref, &chi, m, |v| v, &mut rng)
        })?;
        Ok((x, self.response_coefs(&chi)))
    }

    fn training_pair(
        &self,
        cfg: &SimConfig,
        replicate: u64,
        unit: u64,
        audit: &mut FeasibilityAudit,
    ) -> Result<(DistributionQ, DistributionQ)> {
        let (x, mut coefs) = self.unit_predictor(cfg, replicate, unit, audit)?;
        if self.noise_half.iter().any(|&h| h > 0.0) {
            let mut rng = stream(cfg.seed, replicate, unit, Role::Noise);
            for (c, &h) in coefs.iter_mut().zip(&self.noise_half) {
                *c += rng.random_range(-h..=h);
            }
        }
        self.audit(audit, &coefs, self.d2, &self.y_mean);
        let a = if self.distortion {
            let mut rng = stream(cfg.seed, replicate, unit, Role::Distortion);
            DISTORTION_LEVELS[rng.random_range(0..DISTORTION_LEVELS.len())]
        } else {
            0.0
        };
        let q = if cfg.m.is_none() {
            self.tabulate(&self.y_mean, &coefs, |v| distortion_map(a, v))
        } else {
            Vec::new()
        };
        let y = self.build(cfg.m, q, |m| {
            let mut rng = stream(cfg.seed, replicate, unit, Role::ResponseSample);
            self.sample(&self.y_ref, &coefs, m, |v| distortion_map(a, v), &mut rng)
        })?;
        Ok((x, y))
    }

    /// Training pairs only.
    pub fn training(&self, cfg: &SimConfig, replicate: u64) -> Result<(Vec<DistributionQ>, Vec<DistributionQ>, FeasibilityAudit)> {
        let mut audit = FeasibilityAudit::default();
        let mut xs = Vec::with_capacity(cfg.n);
        let mut ys = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n as u64 {
            let (x, y) = self.training_pair(cfg, replicate, i, &mut audit)?;
            xs.push(x);
            ys.push(y);
        }
        Ok((xs, ys, audit))
    }

    /// Full replicate: training pairs plus new predictors with their targets.
    pub fn generate(&self, cfg: &SimConfig, replicate: u64) -> Result<D2DDataset> {
        let (train_x, train_y, mut audit) = self.training(cfg, replicate)?;
        let mut new_x = Vec::with_capacity(cfg.n_new);
        let mut targets = Vec::with_capacity(cfg.n_new);
        for i in 0..cfg.n_new as u64 {
            let (x, coefs) = self.unit_predictor(cfg, replicate, HOLDOUT_OFFSET + i, &mut audit)?;
            self.audit(&mut audit, &coefs, self.d2, &self.y_mean);
            targets.push(DistributionQ::new(
                Arc::clone(&self.grid),
                self.tabulate(&self.y_mean, &coefs, |v| v),
            )?);
            new_x.push(x);
        }
        Ok(D2DDataset {
            train_x,
            train_y,
            new_x,
            targets,
            audit,
        })
    }
}

/// One replicate of a sine-basis case.
pub fn generate_d2d(cfg: &SimConfig, replicate: u64) -> Result<D2DDataset> {
    Framework::new(cfg)?.generate(cfg, replicate)
}

fn normal_table(grid: &ProbGrid) -> Vec<f64> {
    grid.points().iter().map(|&p| normal_quantile(p)).collect()
}

/// `Gamma(shape, rate)`.
fn gamma(shape: f64, rate: f64) -> Gamma<f64> {
    Gamma::new(shape, 1.0 / rate).expect("positive parameters")
}

fn gaussian(grid: &Arc<ProbGrid>, z: &[f64], m: Option<usize>, mu: f64, sd: f64, rng_seed: impl FnOnce() -> rand_chacha::ChaCha8Rng) -> Result<DistributionQ> {
    match m {
        None => DistributionQ::new(Arc::clone(grid), z.iter().map(|v| mu + sd * v).collect()),
        Some(m) => {
            let mut rng = rng_seed();
            let xs = (0..m)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    mu + sd * e
                })
                .collect();
            estimate_distribution(&SampleSet::new(xs)?, Arc::clone(grid))
        }
    }
}

/// One replicate of a Gaussian-pair case.
///
/// Predictors are `N(u1, s1^2)` and responses `N(u2, s2^2)` with
/// `u1 ~ N(0, 1)`, `s1 ~ Gamma(0.5, rate 0.5)`, `s2 ~ Gamma(1, rate 0.5)` and
/// `u2 = 1 + u1 + e` (linear) or `1 + u1 - u1^2 / 2 + e` (quadratic),
/// `e ~ N(0, 0.5^2)`. Targets are `N(E(u2 | u1), (E s2)^2)`.
pub fn generate_gaussian_pairs(cfg: &SimConfig, replicate: u64) -> Result<D2DDataset> {
    cfg.validate()?;
    let quadratic = match cfg.case {
        Case::GaussLinear => false,
        Case::GaussQuadratic => true,
        c => return Err(Error::InvalidInput(format!("case {c} is not a Gaussian-pair case"))),
    };
    let grid = Arc::new(ProbGrid::midpoint(cfg.grid_m)?);
    let z = normal_table(&grid);
    let (g1, g2) = (gamma(0.5, 0.5), gamma(1.0, 0.5));
    let eps = Normal::new(0.0, 0.5).expect("valid");
    let mean_fn = |u1: f64| if quadratic { 1.0 + u1 - 0.5 * u1 * u1 } else { 1.0 + u1 };
    let draw = |unit: u64| {
        let mut rng = stream(cfg.seed, replicate, unit, Role::Coefficients);
        let u1: f64 = StandardNormal.sample(&mut rng);
        let s1 = g1.sample(&mut rng);
        let s2 = g2.sample(&mut rng);
        let e = eps.sample(&mut rng);
        (u1, s1, s2, mean_fn(u1) + e)
    };
    let mut ds = D2DDataset {
        train_x: Vec::with_capacity(cfg.n),
        train_y: Vec::with_capacity(cfg.n),
        new_x: Vec::with_capacity(cfg.n_new),
        targets: Vec::with_capacity(cfg.n_new),
        audit: FeasibilityAudit::default(),
    };
    for i in 0..cfg.n as u64 {
        let (u1, s1, s2, u2) = draw(i);
        let s = |role| move || stream(cfg.seed, replicate, i, role);
        ds.train_x.push(gaussian(&grid, &z, cfg.m, u1, s1, s(Role::PredictorSample))?);
        ds.train_y.push(gaussian(&grid, &z, cfg.m, u2, s2, s(Role::ResponseSample))?);
    }
    let sd2 = 1.0 / 0.5;
    for i in 0..cfg.n_new as u64 {
        let unit = HOLDOUT_OFFSET + i;
        let (u1, s1, _, _) = draw(unit);
        let s = move || stream(cfg.seed, replicate, unit, Role::PredictorSample);
        ds.new_x.push(gaussian(&grid, &z, cfg.m, u1, s1, s)?);
        ds.targets.push(DistributionQ::new(
            Arc::clone(&grid),
            z.iter().map(|v| mean_fn(u1) + sd2 * v).collect(),
        )?);
    }
    Ok(ds)
}

/// Coefficient function `3 - 2p + p^2` in quantile coordinates.
pub fn d2s_beta1(p: f64) -> f64 {
    3.0 - 2.0 * p + p * p
}

/// Intercept `E(Y)` of the scalar cases.
pub const D2S_INTERCEPT: f64 = 1.0;

/// Range of the Beta shape parameters in the Beta scalar case.
const BETA_SHAPES: (f64, f64) = (1.0, 5.0);

/// Fréchet mean quantile of `Beta(S1, S2)` with independent uniform shapes,
/// by tensor Gauss–Legendre quadrature over the shapes. Cached per grid size.
pub fn beta_mixture_mean(grid: &ProbGrid) -> Arc<Vec<f64>> {
    type Cache = Mutex<HashMap<Vec<u64>, Arc<Vec<f64>>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let key: Vec<u64> = grid.points().iter().map(|p| p.to_bits()).collect();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return Arc::clone(v);
    }
    let (lo, hi) = BETA_SHAPES;
    let (nodes, weights) = gauss_legendre(16, lo, hi);
    let area = (hi - lo) * (hi - lo);
    let vals: Vec<f64> = grid
        .points()
        .iter()
        .map(|&p| {
            let mut acc = 0.0;
            for (a, wa) in nodes.iter().zip(&weights) {
                for (b, wb) in nodes.iter().zip(&weights) {
                    acc += wa * wb * beta_quantile(*a, *b, p);
                }
            }
            acc / area
        })
        .collect();
    let v = Arc::new(vals);
    cache.lock().expect("cache lock").insert(key, Arc::clone(&v));
    v
}

/// One replicate of a scalar-response case.
///
/// Predictors are `g_A # N(u, s^2)` with `u ~ N(0, 1)`, `s ~ Gamma(0.5, rate
/// 0.5)` (Gaussian case) or `g_A # Beta(S1, S2)` with `S1, S2 ~ U(1, 5)` (Beta
/// case), `A` uniform on the distortion levels. Responses are
/// `1 + <beta1, Log nu> + e` with `e ~ N(0, 1)` or `N(0, 0.2^2)`.
pub fn generate_d2s(cfg: &SimConfig, replicate: u64) -> Result<D2sDataset> {
    cfg.validate()?;
    let beta_case = match cfg.case {
        Case::D2sGauss => false,
        Case::D2sBeta => true,
        c => return Err(Error::InvalidInput(format!("case {c} is not a scalar-response case"))),
    };
    let grid = Arc::new(ProbGrid::midpoint(cfg.grid_m)?);
    let z = normal_table(&grid);
    let mean_q: Arc<Vec<f64>> = if beta_case { beta_mixture_mean(&grid) } else { Arc::new(z.clone()) };
    let wbeta: Vec<f64> = grid
        .points()
        .iter()
        .zip(grid.weights())
        .map(|(&p, &w)| w * d2s_beta1(p))
        .collect();
    let g = gamma(0.5, 0.5);
    let noise = Normal::new(0.0, if beta_case { 0.2 } else { 1.0 }).expect("valid");
    let (slo, shi) = BETA_SHAPES;

    let unit_data = |unit: u64| -> Result<(DistributionQ, f64)> {
        let mut rng = stream(cfg.seed, replicate, unit, Role::Coefficients);
        let (p1, p2) = if beta_case {
            (rng.random_range(slo..shi), rng.random_range(slo..shi))
        } else {
            (StandardNormal.sample(&mut rng), g.sample(&mut rng))
        };
        let a = DISTORTION_LEVELS[stream(cfg.seed, replicate, unit, Role::Distortion).random_range(0..DISTORTION_LEVELS.len())];
        let exact: Vec<f64> = if beta_case {
            grid.points().iter().map(|&p| distortion_map(a, beta_quantile(p1, p2, p))).collect()
        } else {
            z.iter().map(|v| distortion_map(a, p1 + p2 * v)).collect()
        };
        let oracle = D2S_INTERCEPT
            + exact
                .iter()
                .zip(mean_q.iter())
                .zip(&wbeta)
                .map(|((q, q0), w)| w * (q - q0))
                .sum::<f64>();
        let x = match cfg.m {
            None => DistributionQ::new(Arc::clone(&grid), exact)?,
            Some(m) => {
                let mut rng = stream(cfg.seed, replicate, unit, Role::PredictorSample);
                let rd = if beta_case {
                    RefDist::Beta { a: p1, b: p2 }
                } else {
                    RefDist::Normal { mean: p1, sd: p2 }
                };
                let xs = (0..m)
                    .map(|_| distortion_map(a, rd.sample_with_level(&mut rng).0))
                    .collect();
                estimate_distribution(&SampleSet::new(xs)?, Arc::clone(&grid))?
            }
        };
        Ok((x, oracle))
    };

    let mut ds = D2sDataset {
        train_x: Vec::with_capacity(cfg.n),
        train_y: Vec::with_capacity(cfg.n),
        new_x: Vec::with_capacity(cfg.n_new),
        oracle: Vec::with_capacity(cfg.n_new),
    };
    for i in 0..cfg.n as u64 {
        let (x, oracle) = unit_data(i)?;
        let e = noise.sample(&mut stream(cfg.seed, replicate, i, Role::Noise));
        ds.train_x.push(x);
        ds.train_y.push(oracle + e);
    }
    for i in 0..cfg.n_new as u64 {
        let (x, oracle) = unit_data(HOLDOUT_OFFSET + i)?;
        ds.new_x.push(x);
        ds.oracle.push(oracle);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::wasserstein_distance;
    use crate::geometry::log_map;

    fn small(case: Case) -> SimConfig {
        SimConfig {
            n: 20,
            n_new: 10,
            grid_m: 200,
            m: None,
            ..SimConfig::new(case)
        }
    }

    #[test]
    fn zero_coefficients_give_the_means() {
        let fw = Framework::new(&small(Case::Tgauss)).unwrap();
        let zero = vec![0.0; fw.rank()];
        let q = fw.tabulate(fw.predictor_mean(), &zero, |v| v);
        assert_eq!(q, fw.predictor_mean().qvals());
        assert!(fw.response_coefs(&zero).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn audit_is_clean() {
        for case in [Case::Tgauss, Case::Beta] {
            for coef in [CoefMode::Fig1, CoefMode::powerlaw_default()] {
                let cfg = SimConfig { coef, ..small(case) };
                let ds = generate_d2d(&cfg, 3).unwrap();
                assert_eq!(ds.audit.violations, 0);
                assert_eq!(ds.audit.checked, 2 * (20 + 10));
                assert!(ds.audit.max_bound <= 1.0);
            }
        }
    }

    #[test]
    fn undistorted_exact_responses_are_conditional_means() {
        let cfg = SimConfig { distortion: false, ..small(Case::Tgauss) };
        let fw = Framework::new(&cfg).unwrap();
        let ds = fw.generate(&cfg, 0).unwrap();
        let k = fw.true_kernel().unwrap();
        for (x, y) in ds.train_x.iter().zip(&ds.train_y) {
            let g = k.apply(&log_map(fw.predictor_mean(), x).unwrap()).unwrap();
            let pred = crate::geometry::exp_map(&g).unwrap();
            assert!(wasserstein_distance(&pred, y).unwrap() < 1e-12);
        }
    }

    #[test]
    fn distortion_levels_average_to_identity() {
        let cfg = small(Case::Beta);
        let fw = Framework::new(&cfg).unwrap();
        let q = fw.response_mean().qvals();
        for (k, &v) in q.iter().enumerate() {
            let avg: f64 = DISTORTION_LEVELS.iter().map(|&a| distortion_map(a, v)).sum::<f64>() / 6.0;
            assert!((avg - q[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_push_forward_matches_quantiles() {
        let cfg = SimConfig { m: Some(200_000), n: 3, n_new: 1, ..small(Case::Tgauss) };
        let fw = Framework::new(&cfg).unwrap();
        let chi = fw.draw_chi(&mut stream(1, 0, 0, Role::Coefficients));
        let a = DISTORTION_LEVELS[4];
        let exact = DistributionQ::new(Arc::clone(fw.grid()), fw.tabulate(fw.predictor_mean(), &chi, |v| distortion_map(a, v))).unwrap();
        let xs = fw.sample(&fw.x_ref, &chi, 200_000, |v| distortion_map(a, v), &mut stream(1, 0, 0, Role::PredictorSample));
        let est = estimate_distribution(&SampleSet::new(xs).unwrap(), Arc::clone(fw.grid())).unwrap();
        assert!(wasserstein_distance(&exact, &est).unwrap() < 2e-3);
    }

    #[test]
    fn truncated_kernel_at_full_rank_is_the_truth() {
        let cfg = SimConfig { coef: CoefMode::powerlaw_default(), ..small(Case::Tgauss) };
        let fw = Framework::new(&cfg).unwrap();
        let full = fw.true_kernel().unwrap();
        let trunc = fw.truncated_kernel(20, 20).unwrap();
        assert!(full.hs_distance(&trunc).unwrap() < 1e-10);
        assert!(fw.truncated_kernel(21, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig { m: Some(50), ..small(Case::Beta) };
        let a = generate_d2d(&cfg, 7).unwrap();
        let b = generate_d2d(&cfg, 7).unwrap();
        assert_eq!(a.train_y, b.train_y);
        assert_eq!(a.new_x, b.new_x);
        let c = generate_d2d(&cfg, 8).unwrap();
        assert_ne!(a.train_y, c.train_y);
    }

    #[test]
    fn gaussian_pairs() {
        let cfg = SimConfig { n: 2000, n_new: 5, ..small(Case::GaussLinear) };
        let ds = generate_gaussian_pairs(&cfg, 0).unwrap();
        // sd of an exact Gaussian is recovered by the quantile slope
        let sd1: f64 = ds.train_x.iter().map(|d| d.quantile_at(0.75) - d.quantile_at(0.25)).sum::<f64>()
            / (2000.0 * (normal_quantile(0.75) - normal_quantile(0.25)));
        // Gamma(0.5, rate 0.5) has mean 1; standard error about 0.03
        assert!((sd1 - 1.0).abs() < 0.1, "{sd1}");
        assert!(generate_gaussian_pairs(&small(Case::Tgauss), 0).is_err());
        let q = generate_gaussian_pairs(&small(Case::GaussQuadratic), 0).unwrap();
        assert_eq!(q.targets.len(), 10);
    }

    #[test]
    fn d2s_oracle_at_mean_is_intercept() {
        let cfg = small(Case::D2sGauss);
        let ds = generate_d2s(&cfg, 0).unwrap();
        assert_eq!(ds.train_y.len(), 20);
        assert_eq!(ds.oracle.len(), 10);
        assert!(ds.oracle.iter().all(|v| v.is_finite()));
        let grid = ProbGrid::midpoint(200).unwrap();
        let mq = beta_mixture_mean(&grid);
        assert!(mq.windows(2).all(|w| w[1] > w[0]));
        // Beta(a, b) and Beta(b, a) mirror each other, so the mixture is symmetric about 1/2
        for k in 0..100 {
            assert!((mq[k] + mq[199 - k] - 1.0).abs() < 1e-9);
        }
        let b = generate_d2s(&SimConfig { m: Some(100), ..small(Case::D2sBeta) }, 0).unwrap();
        assert_eq!(b.new_x.len(), 10);
    }
}
