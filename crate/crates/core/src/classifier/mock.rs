use crate::raster::BandName;

use super::{ClassifierBlock, ClassifierError, CloudScore, SceneClassifier};

/// Built-in stand-in for a trained network: the block mean of the clipped
/// thickness index `max(0, 2B - 0.95G)`, divided by a saturation constant and
/// clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralMock {
    pub saturation: f32,
}

impl Default for SpectralMock {
    fn default() -> Self {
        Self { saturation: 1.0 }
    }
}

impl SpectralMock {
    pub fn new(saturation: f32) -> Self {
        assert!(saturation > 0.0 && saturation.is_finite());
        Self { saturation }
    }
}

impl SceneClassifier for SpectralMock {
    fn classify(&self, block: &ClassifierBlock) -> Result<CloudScore, ClassifierError> {
        let blue = block
            .band(BandName::Blue)
            .ok_or(ClassifierError::MissingBand(BandName::Blue))?;
        let green = block
            .band(BandName::Green)
            .ok_or(ClassifierError::MissingBand(BandName::Green))?;
        let sum: f64 = blue
            .iter()
            .zip(green)
            .map(|(&b, &g)| (2.0 * b as f64 - 0.95 * g as f64).max(0.0))
            .sum();
        let mean = sum / blue.len() as f64;
        let score = (mean / self.saturation as f64).clamp(0.0, 1.0) as f32;
        CloudScore::new(score)
    }
}
