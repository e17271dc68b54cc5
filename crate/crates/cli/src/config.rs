//! Pipeline configuration files.
//!
//! ```toml
//! seed = 7
//! k = 2
//!
//! [paths]
//! gt = "gt"                   # instance label maps, one per image
//! images = "images"           # needed only when augmenting
//! probabilities = "prob"      # external network output, optional
//! out = "run"
//!
//! [weights]
//! beta = 30.0
//!
//! [augment]
//! count = 2
//!
//! [decode]
//! strategy = "wt"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use cellsplit::augment::AugmentSpec;
use cellsplit::decode::DecodeParams;
use cellsplit::gtprep::NeighborhoodSpec;
use cellsplit::weights::W3Params;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub k: NeighborhoodSpec,
    pub paths: PathsConfig,
    #[serde(default)]
    pub weights: W3Params,
    #[serde(default)]
    pub augment: AugmentStage,
    #[serde(default)]
    pub decode: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub gt: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentStage {
    /// Augmented copies per image; 0 skips the stage.
    pub count: usize,
    pub spec: AugmentSpec,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
    }

    /// Reads, parses and validates a config file, resolving its relative
    /// paths against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = crate::files::read_text(path)?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let paths = &mut config.paths;
        paths.gt = base.join(&paths.gt);
        paths.out = base.join(&paths.out);
        paths.images = paths.images.as_ref().map(|p| base.join(p));
        paths.probabilities = paths.probabilities.as_ref().map(|p| base.join(p));
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.weights.validate()?;
        self.augment.spec.validate()?;
        self.decode.validate()?;
        if self.augment.count > 0 && self.paths.images.is_none() {
            return Err(CliError::Validation("augment.count > 0 requires paths.images".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[paths]\ngt = \"gt\"\nout = \"out\"\n";

    #[test]
    fn defaults_fill_in() {
        let config = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(config.k.radius(), 2);
        assert_eq!(config.weights, W3Params::default());
        assert_eq!(config.decode.watershed().tau0, 0.8);
        assert_eq!(config.augment.count, 0);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = PipelineConfig::from_toml(&format!("{MINIMAL}[weights]\nbetta = 3.0\n")).unwrap_err();
        assert!(err.to_string().contains("betta"), "{err}");
        assert_eq!(err.exit_code(), crate::EXIT_VALIDATION);
        let err = PipelineConfig::from_toml(&format!("colour = 1\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        let err = PipelineConfig::from_toml(&format!("k = 0\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("k must be >= 1"), "{err}");
        let config = PipelineConfig::from_toml(&format!("{MINIMAL}[weights]\nsigma = -1.0\n")).unwrap();
        assert!(config.validate().is_err());
        let config = PipelineConfig::from_toml(&format!("{MINIMAL}[augment]\ncount = 1\n")).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let config = PipelineConfig::from_toml(&format!("seed = 9\n{MINIMAL}[decode]\nstrategy = \"th\"\ngamma1 = 0.5\ngamma2 = 0.5\n")).unwrap();
        let text = toml::to_string(&config).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), config);
    }
}
