use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionParams;
use crate::mask::ExpansionParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every tunable constant of the detector. Missing JSON keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fusion: FusionParams,
    pub expansion: ExpansionParams,
    /// Scene masks are `probability > scene_threshold`.
    pub scene_threshold: f64,
    pub mean_window: usize,
    pub svd_rank: usize,
    /// Saturation constant of the built-in spectral classifier.
    pub mock_saturation: f64,
    /// Per-frame timeout for subprocess classifiers.
    pub worker_timeout_secs: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fusion: FusionParams::default(),
            expansion: ExpansionParams::default(),
            scene_threshold: 0.5,
            mean_window: 29,
            svd_rank: 70,
            mock_saturation: 1.0,
            worker_timeout_secs: 30.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fusion
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.expansion;
        if !(e.dist_min > 0.0 && e.dist_min <= e.dist_max && e.dist_max.is_finite()) {
            return Err(ConfigError::Invalid("expansion needs 0 < dist_min <= dist_max".into()));
        }
        if self.mean_window == 0 || self.mean_window.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!(
                "mean_window must be odd, got {}",
                self.mean_window
            )));
        }
        if self.svd_rank == 0 {
            return Err(ConfigError::Invalid("svd_rank must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.scene_threshold) {
            return Err(ConfigError::Invalid("scene_threshold must be in [0, 1)".into()));
        }
        if !(self.mock_saturation > 0.0 && self.mock_saturation.is_finite()) {
            return Err(ConfigError::Invalid("mock_saturation must be positive".into()));
        }
        if !(self.worker_timeout_secs > 0.0 && self.worker_timeout_secs.is_finite()) {
            return Err(ConfigError::Invalid("worker_timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let c = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.fusion.grad_thresh, 19.0);
        assert_eq!(c.svd_rank, 70);
        assert_eq!(c.mean_window, 29);
    }

    #[test]
    fn partial_override() {
        let c = PipelineConfig::from_json(r#"{"fusion": {"grad_thresh": 21}, "svd_rank": 8}"#).unwrap();
        assert_eq!(c.fusion.grad_thresh, 21.0);
        assert_eq!(c.fusion.mu1, 0.5);
        assert_eq!(c.svd_rank, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_json(r#"{"grad": 3}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let c = PipelineConfig {
            mean_window: 28,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
