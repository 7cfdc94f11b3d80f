//! Scene-level classifier contract: a normalized 256x256 block goes in, a
//! cloud probability comes out.

mod mock;
pub mod protocol;
mod subprocess;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::BandName;

pub use mock::SpectralMock;
pub use subprocess::{SubprocessClassifier, WorkerCommand};

/// Edge length of every block handed to a classifier.
pub const BLOCK_EDGE: usize = 256;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("block has {0} samples per band, expected {expected}", expected = BLOCK_EDGE * BLOCK_EDGE)]
    BlockShape(usize),
    #[error("block sample {value} at index {index} is outside [0, 1]")]
    BlockRange { index: usize, value: f32 },
    #[error("score {0} is outside [0, 1]")]
    ScoreRange(f32),
    #[error("block has no `{0}` band")]
    MissingBand(BandName),
    #[error("classifier backend: {0}")]
    Backend(String),
    #[error("worker protocol violation: {0}")]
    Protocol(String),
    #[error("invalid classifier spec `{0}` (expected `builtin:spectral` or `subprocess:<command>`)")]
    Spec(String),
}

/// Band-major, normalized 256x256 block.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBlock {
    bands: Vec<BandName>,
    data: Vec<f32>,
}

impl ClassifierBlock {
    pub fn new(bands: Vec<BandName>, data: Vec<f32>) -> Result<Self, ClassifierError> {
        let plane = BLOCK_EDGE * BLOCK_EDGE;
        if bands.is_empty() || data.len() != plane * bands.len() {
            return Err(ClassifierError::BlockShape(data.len() / bands.len().max(1)));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ClassifierError::BlockRange { index, value });
        }
        Ok(Self { bands, data })
    }

    pub fn band_names(&self) -> &[BandName] {
        &self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn band(&self, name: BandName) -> Option<&[f32]> {
        let plane = BLOCK_EDGE * BLOCK_EDGE;
        self.bands
            .iter()
            .position(|&b| b == name)
            .map(|i| &self.data[i * plane..(i + 1) * plane])
    }
}

/// Probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CloudScore(f32);

impl CloudScore {
    pub fn new(value: f32) -> Result<Self, ClassifierError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ClassifierError::ScoreRange(value))
        }
    }

    pub fn value(self) -> f32 {
        self.0
    }
}

/// A scene-level classifier backend. Implementations must be deterministic in
/// the block contents and callable from several threads at once.
pub trait SceneClassifier: Send + Sync {
    fn classify(&self, block: &ClassifierBlock) -> Result<CloudScore, ClassifierError>;
}

impl<T: SceneClassifier + ?Sized> SceneClassifier for Box<T> {
    fn classify(&self, block: &ClassifierBlock) -> Result<CloudScore, ClassifierError> {
        (**self).classify(block)
    }
}

/// Parsed form of the `--classifier` flag.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    BuiltinSpectral,
    Subprocess(WorkerCommand),
}

impl FromStr for ClassifierSpec {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin:spectral" {
            return Ok(Self::BuiltinSpectral);
        }
        match s.strip_prefix("subprocess:") {
            Some(cmd) => WorkerCommand::parse(cmd)
                .map(Self::Subprocess)
                .ok_or_else(|| ClassifierError::Spec(s.to_string())),
            None => Err(ClassifierError::Spec(s.to_string())),
        }
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BuiltinSpectral => f.write_str("builtin:spectral"),
            Self::Subprocess(cmd) => write!(f, "subprocess:{cmd}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_range() {
        assert!(CloudScore::new(0.0).is_ok());
        assert!(CloudScore::new(1.0).is_ok());
        assert!(CloudScore::new(1.5).is_err());
        assert!(CloudScore::new(-0.1).is_err());
        assert!(CloudScore::new(f32::NAN).is_err());
    }

    #[test]
    fn block_validation() {
        let plane = BLOCK_EDGE * BLOCK_EDGE;
        assert!(ClassifierBlock::new(vec![BandName::Blue], vec![0.0; plane]).is_ok());
        assert!(matches!(
            ClassifierBlock::new(vec![BandName::Blue], vec![0.0; plane - 1]),
            Err(ClassifierError::BlockShape(_))
        ));
        let mut data = vec![0.0; plane];
        data[7] = 1.01;
        assert!(matches!(
            ClassifierBlock::new(vec![BandName::Blue], data),
            Err(ClassifierError::BlockRange { index: 7, .. })
        ));
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "builtin:spectral".parse::<ClassifierSpec>().unwrap(),
            ClassifierSpec::BuiltinSpectral
        );
        let spec: ClassifierSpec = "subprocess:python3 worker.py --gpu".parse().unwrap();
        assert_eq!(spec.to_string(), "subprocess:python3 worker.py --gpu");
        assert!("subprocess:   ".parse::<ClassifierSpec>().is_err());
        assert!("builtin:cnn".parse::<ClassifierSpec>().is_err());
    }
}
