//! Regression and autoregression for distribution-valued data in the
//! 2-Wasserstein geometry.
//!
//! Distributions on the real line are stored as quantile functions on a
//! probability grid. Log maps at a base distribution turn them into tangent
//! vectors (differences of quantile functions), where ordinary functional
//! data tools apply: covariance eigendecomposition, truncated linear operator
//! estimation, and linear forecasting. Predictions are mapped back with the
//! exponential map, after shrinking toward the base whenever the fitted
//! vector would break monotonicity.
//!
//! ```
//! use std::sync::Arc;
//! use wreg::{fit_d2d, DistributionQ, ProbGrid, TruncationChoice};
//!
//! let grid = Arc::new(ProbGrid::midpoint(100).unwrap());
//! let dist = |m: f64, s: f64| {
//!     DistributionQ::from_quantile_fn(Arc::clone(&grid), |p| m + s * wreg::special::normal_quantile(p)).unwrap()
//! };
//! let xs: Vec<_> = (0..10).map(|i| dist(i as f64 / 10.0, 1.0 + i as f64 / 20.0)).collect();
//! let ys: Vec<_> = (0..10).map(|i| dist(2.0 * i as f64 / 10.0, 1.0)).collect();
//! let fit = fit_d2d(&xs, &ys, &TruncationChoice::default()).unwrap();
//! let (pred, eta) = wreg::predict_d2d(&fit, &xs[3]).unwrap();
//! assert!(wreg::wasserstein_distance(&pred, &ys[3]).unwrap() < 1e-6);
//! assert_eq!(eta, 1.0);
//! ```

pub mod d2d;
pub mod d2s;
pub mod distribution;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod isotonic;
pub mod sim;
pub mod special;
pub mod truncation;
pub mod war;
pub mod wfpca;

pub use d2d::{
    boundary_projection, evaluate_awd, evaluate_awd_detailed, fit_d2d, predict_d2d, select_truncation, D2DFit,
};
pub use d2s::{average_prediction_error, fit_d2s, predict_d2s, ScalarFit};
pub use distribution::{
    cdf_from_quantile, estimate_distribution, quantile_from_cdf, wasserstein_distance, CdfCurve, DistributionQ,
    SampleSet,
};
pub use error::{Error, ErrorClass, Result};
pub use geometry::{
    exp_map, geodesic_point, inner_product, log_map, parallel_transport, OperatorKernel, TangentVector,
};
pub use grid::{ProbGrid, DEFAULT_GRID_SIZE};
pub use truncation::{TruncMethod, TruncationChoice};
pub use war::{fit_ar, forecast_one, forecast_rolling, simulate_ar_process, ARFit, ARProcessSpec};
pub use wfpca::{covariance, cross_covariance, eigendecompose, frechet_mean, EigenSystem, FrechetMean};
