//! Optional TOML settings file.
//!
//! ```toml
//! threads = 4
//! grid_m = 1000
//! seed = 7
//! trunc = "cv:5"
//! split = 0.8
//!
//! [simulation]
//! case = "beta"
//! n = 200
//! m = 50
//! replicates = 100
//! ```

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use wreg::sim::SimConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub grid_m: Option<usize>,
    pub seed: Option<u64>,
    pub trunc: Option<String>,
    pub split: Option<f64>,
    pub simulation: Option<SimConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| wreg::Error::InvalidInput(format!("config {}: {e}", path.display())).into())
    }
}
