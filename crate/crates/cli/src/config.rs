//! Configuration file: one optional TOML table per experiment.

use std::path::Path;

use anyhow::{Context, Result};
use lfm_core::experiments::{CertifyConfig, HeatExperimentConfig, KernelCheckConfig, SpringConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Seed applied to every experiment unless `--seed` is given.
    pub seed: Option<u64>,
    pub spring: SpringConfig,
    pub heat: HeatExperimentConfig,
    pub kernel: KernelCheckConfig,
    pub certify: CertifyConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies the seed from the command line or the top level of the file.
    pub fn resolve_seed(&mut self, cli_seed: Option<u64>) {
        if let Some(seed) = cli_seed.or(self.seed) {
            self.spring.seed = seed;
            self.heat.seed = seed;
            self.seed = Some(seed);
        }
    }
}
