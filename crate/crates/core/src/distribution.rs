//! One-dimensional distributions represented by quantile functions on a shared grid.
//!
//! A [`DistributionQ`] stores `F^{-1}(p_k)` at the points of a [`ProbGrid`]. In this
//! representation the 2-Wasserstein distance is the weighted L2 distance between
//! quantile vectors, and Fréchet means are pointwise averages. Cumulative
//! distribution functions are derived on demand via [`cdf_from_quantile`].

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::ProbGrid;
use crate::isotonic::{max_decrease, pava_in_place};

/// Decreases up to this size (relative to the value scale) are repaired by
/// isotonic projection; larger ones are rejected.
pub const MONOTONE_REPAIR_TOL: f64 = 1e-8;

/// Distribution stored as its quantile function on a probability grid.
#[derive(Debug, Clone)]
pub struct DistributionQ {
    grid: Arc<ProbGrid>,
    qvals: Vec<f64>,
}

impl DistributionQ {
    /// Validates finiteness and monotonicity, repairing floating-point noise.
    pub fn new(grid: Arc<ProbGrid>, mut qvals: Vec<f64>) -> Result<Self> {
        if qvals.len() != grid.len() {
            return Err(Error::LengthMismatch(qvals.len(), grid.len()));
        }
        if let Some(k) = qvals.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite quantile value at grid index {k}"
            )));
        }
        repair_monotone(&mut qvals)?;
        Ok(Self { grid, qvals })
    }

    /// Tabulates a quantile function at the grid points.
    pub fn from_quantile_fn(grid: Arc<ProbGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let qvals = grid.points().iter().map(|&p| f(p)).collect();
        Self::new(grid, qvals)
    }

    pub fn grid(&self) -> &Arc<ProbGrid> {
        &self.grid
    }

    pub fn qvals(&self) -> &[f64] {
        &self.qvals
    }

    pub fn into_qvals(self) -> Vec<f64> {
        self.qvals
    }

    pub fn len(&self) -> usize {
        self.qvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qvals.is_empty()
    }

    /// True when both live on the same grid.
    pub fn same_grid(&self, other: &DistributionQ) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_grid(&self, other: &DistributionQ) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrid {
                left: self.len(),
                right: other.len(),
            })
        }
    }

    /// Index of the first tie, if the quantile function is not strictly increasing.
    pub fn first_tie(&self) -> Option<usize> {
        self.qvals.windows(2).position(|w| w[1] <= w[0])
    }

    /// Strictly increasing quantile values (no atoms at grid resolution).
    pub fn is_atomless(&self) -> bool {
        self.first_tie().is_none()
    }

    pub(crate) fn require_atomless(&self) -> Result<()> {
        match self.first_tie() {
            None => Ok(()),
            Some(index) => Err(Error::NotAtomless { index }),
        }
    }

    /// Location shift by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            qvals: self.qvals.iter().map(|q| q + c).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.grid.integrate(&self.qvals)
    }

    /// Quantile at an arbitrary level by linear interpolation between grid points
    /// (constant beyond the outermost points).
    pub fn quantile_at(&self, p: f64) -> f64 {
        let pts = self.grid.points();
        let idx = pts.partition_point(|&x| x < p);
        if idx == 0 {
            return self.qvals[0];
        }
        if idx == pts.len() {
            return self.qvals[pts.len() - 1];
        }
        let (p0, p1) = (pts[idx - 1], pts[idx]);
        let t = (p - p0) / (p1 - p0);
        self.qvals[idx - 1] + t * (self.qvals[idx] - self.qvals[idx - 1])
    }
}

impl PartialEq for DistributionQ {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.qvals == other.qvals
    }
}

fn repair_monotone(qvals: &mut [f64]) -> Result<()> {
    if let Some((index, violation)) = max_decrease(qvals) {
        let scale = qvals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if violation > MONOTONE_REPAIR_TOL * scale {
            return Err(Error::NonMonotone { index, violation });
        }
        pava_in_place(qvals);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    grid_m: usize,
    qvals: Vec<f64>,
}

impl Serialize for DistributionQ {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let grid_m = self.grid.midpoint_size().ok_or_else(|| {
            serde::ser::Error::custom("only midpoint grids can be serialized")
        })?;
        DistributionRepr {
            grid_m,
            qvals: self.qvals.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DistributionQ {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DistributionRepr::deserialize(deserializer)?;
        let grid = ProbGrid::midpoint(repr.grid_m).map_err(serde::de::Error::custom)?;
        DistributionQ::new(Arc::new(grid), repr.qvals).map_err(serde::de::Error::custom)
    }
}

/// Right-continuous step cdf: `F(r) = fvals[i]` for `xs[i] <= r < xs[i+1]`, zero left of `xs[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    xs: Vec<f64>,
    fvals: Vec<f64>,
}

impl CdfCurve {
    pub fn new(xs: Vec<f64>, fvals: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidInput("empty cdf".into()));
        }
        if xs.len() != fvals.len() {
            return Err(Error::LengthMismatch(xs.len(), fvals.len()));
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "cdf abscissae must be finite and strictly increasing".into(),
            ));
        }
        if fvals.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidInput("cdf values must lie in [0, 1]".into()));
        }
        if fvals.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("cdf values must be non-decreasing".into()));
        }
        if *fvals.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput("cdf must reach 1".into()));
        }
        Ok(Self { xs, fvals })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn fvals(&self) -> &[f64] {
        &self.fvals
    }

    /// `F(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        let idx = self.xs.partition_point(|&x| x <= r);
        if idx == 0 {
            0.0
        } else {
            self.fvals[idx - 1]
        }
    }
}

/// Left-continuous inverse `inf{r : F(r) >= p_k}` at every grid point.
pub fn quantile_from_cdf(cdf: &CdfCurve, grid: Arc<ProbGrid>) -> Result<DistributionQ> {
    let mut qvals = Vec::with_capacity(grid.len());
    for &p in grid.points() {
        let idx = cdf.fvals.partition_point(|&f| f < p);
        let x = cdf.xs.get(idx).copied().ok_or_else(|| {
            Error::InvalidInput(format!("cdf never reaches level {p}"))
        })?;
        qvals.push(x);
    }
    DistributionQ::new(grid, qvals)
}

/// Cdf `F(r) = sup{p : F^{-1}(p) <= r}` evaluated at the distinct quantile values.
///
/// Between grid points the quantile function is read as the linear interpolant,
/// so the supremum at the largest quantile value is 1.
pub fn cdf_from_quantile(d: &DistributionQ) -> CdfCurve {
    let pts = d.grid.points();
    let mut xs: Vec<f64> = Vec::new();
    let mut fvals: Vec<f64> = Vec::new();
    for (k, &q) in d.qvals.iter().enumerate() {
        if xs.last() == Some(&q) {
            *fvals.last_mut().unwrap() = pts[k];
        } else {
            xs.push(q);
            fvals.push(pts[k]);
        }
    }
    *fvals.last_mut().unwrap() = 1.0;
    CdfCurve { xs, fvals }
}

/// Unordered real observations drawn from one distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Turns a sample into a quantile function on a grid.
pub trait QuantileEstimator {
    fn estimate(&self, sample: &SampleSet, grid: Arc<ProbGrid>) -> Result<DistributionQ>;
}

/// Empirical quantiles with linear interpolation between order statistics.
///
/// The `i`-th order statistic (1-based) sits at level `(i - 1/2)/m`. Levels
/// outside `[1/(2m), 1 - 1/(2m)]` continue the slope of the outermost segment,
/// so a sample with distinct values yields a strictly increasing quantile
/// function on any grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmpiricalQuantile;

impl QuantileEstimator for EmpiricalQuantile {
    fn estimate(&self, sample: &SampleSet, grid: Arc<ProbGrid>) -> Result<DistributionQ> {
        let m = sample.len();
        if m < 2 {
            return Err(Error::InsufficientData { needed: 2, got: m });
        }
        let mut xs = sample.values.clone();
        xs.sort_unstable_by(f64::total_cmp);
        let mf = m as f64;
        let qvals = grid
            .points()
            .iter()
            .map(|&p| {
                let pos = p * mf - 0.5;
                let i = (pos.floor().max(0.0) as usize).min(m - 2);
                let t = pos - i as f64;
                xs[i] + t * (xs[i + 1] - xs[i])
            })
            .collect();
        DistributionQ::new(grid, qvals)
    }
}

/// Empirical quantile estimate of the distribution that generated `sample`.
pub fn estimate_distribution(sample: &SampleSet, grid: Arc<ProbGrid>) -> Result<DistributionQ> {
    EmpiricalQuantile.estimate(sample, grid)
}

/// 2-Wasserstein distance `sqrt(sum_k w_k (a_k - b_k)^2)`.
pub fn wasserstein_distance(a: &DistributionQ, b: &DistributionQ) -> Result<f64> {
    a.check_grid(b)?;
    Ok(squared_distance(a.grid.weights(), &a.qvals, &b.qvals).sqrt())
}

pub(crate) fn squared_distance(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum()
}
