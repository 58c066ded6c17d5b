//! Simulation framework: model-conforming data generators and replicate studies.

pub mod basis;
pub mod config;
pub mod generate;
pub mod refdist;
pub mod rng;
pub mod study;

pub use basis::{basis_fn, distortion_map, kappa};
pub use config::{Case, CoefMode, SimConfig};
pub use generate::{generate_d2d, generate_d2s, generate_gaussian_pairs, D2DDataset, D2sDataset, FeasibilityAudit, Framework};
pub use refdist::RefDist;
pub use study::{ape_study, awd_study, convergence_study, ApeRecord, AwdRecord, AwdStudy, ConvergenceRow, ConvergenceStudy};
