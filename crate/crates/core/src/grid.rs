//! Probability grids on which quantile functions are tabulated.

use crate::error::{Error, Result};

/// Default number of grid points.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// A discretization `0 < p_1 < ... < p_M < 1` with quadrature weights summing to one.
///
/// Every inner product and distance in the crate is a weighted sum over these
/// points, so all distributions that interact must share a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ProbGrid {
    /// Midpoint rule `p_k = (k - 1/2) / M` with weights `1/M`.
    pub fn midpoint(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {m}"
            )));
        }
        let mf = m as f64;
        let points = (0..m).map(|k| (k as f64 + 0.5) / mf).collect();
        let weights = vec![1.0 / mf; m];
        Ok(Self { points, weights })
    }

    /// Arbitrary grid with explicit quadrature weights.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch(points.len(), weights.len()));
        }
        if points.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidInput(
                "grid points must lie in the open interval (0, 1)".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "grid points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(
                "grid weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "grid weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Some(M)` when this is the midpoint grid of size `M`.
    pub fn midpoint_size(&self) -> Option<usize> {
        let m = self.len() as f64;
        let is_mid = self
            .points
            .iter()
            .zip(&self.weights)
            .enumerate()
            .all(|(k, (&p, &w))| (p - (k as f64 + 0.5) / m).abs() < 1e-12 && (w - 1.0 / m).abs() < 1e-15);
        is_mid.then_some(self.len())
    }

    /// Weighted sum `sum_k w_k a_k b_k`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// Weighted sum of `f(a_k)` over the grid.
    pub fn integrate(&self, vals: &[f64]) -> f64 {
        self.weights.iter().zip(vals).map(|(w, v)| w * v).sum()
    }
}
