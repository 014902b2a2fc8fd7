use std::path::Path;

use anyhow::{bail, Context, Result};
use palette_forge::conditioning::DropoutTable;
use palette_forge::curation::{DEFAULT_RARE_K, DEFAULT_TAU};
use palette_forge::histogram::Dims;
use palette_forge::palette::DEFAULT_KMEANS_K;
use palette_forge::transport::DEFAULT_QC_EXPONENT;
use palette_forge::DistanceParams;
use serde::{Deserialize, Serialize};

/// Settings file. Every field has a default; command-line flags win.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub distance: DistanceConfig,
    pub histogram: HistogramConfig,
    pub dropout: DropoutTable,
    pub curation: CurationConfig,
    pub extract: ExtractConfig,
    pub seeds: SeedConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub threshold: f64,
    pub gamma: f64,
    pub m: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            threshold: DistanceParams::DEFAULT_THRESHOLD,
            gamma: DistanceParams::DEFAULT_SHARPEN_EXPONENT,
            m: DEFAULT_QC_EXPONENT,
        }
    }
}

/// Informational: the file formats fix the grid, so only the standard dims
/// are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub dims: [u16; 3],
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            dims: Dims::STANDARD.as_array(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub tau: f64,
    pub rare_k: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            rare_k: DEFAULT_RARE_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub method: String,
    pub k: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            method: "kmeans".into(),
            k: DEFAULT_KMEANS_K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub extract: u64,
    pub sampler: u64,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.histogram.dims != Dims::STANDARD.as_array() {
            bail!("histogram.dims must be {:?}", Dims::STANDARD.as_array());
        }
        self.dropout.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.distance.threshold, 20.0);
        assert_eq!(c.curation.rare_k, 100);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c: Config = toml::from_str("[distance]\nthreshold = 10.0\n[dropout]\nentropy_drop_prob = 0.2\n").unwrap();
        assert_eq!(c.distance.threshold, 10.0);
        assert_eq!(c.distance.gamma, 1.0);
        assert_eq!(c.dropout.entropy_drop_prob, 0.2);
        assert_eq!(c.dropout.color_probs, [0.45, 0.45, 0.10]);
    }

    #[test]
    fn rejects_unknown_keys_and_other_dims() {
        assert!(toml::from_str::<Config>("[distance]\nthresh = 1.0\n").is_err());
        let c: Config = toml::from_str("[histogram]\ndims = [8, 8, 8]\n").unwrap();
        assert!(c.validate().is_err());
    }
}
