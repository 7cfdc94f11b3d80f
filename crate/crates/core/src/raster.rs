//! In-memory raster types: multi-band radiance imagery, float grids and
//! binary masks. All three are row-major and validated on construction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted raster edge, equal to the smallest window scale.
pub const MIN_RASTER_EDGE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("expected {expected} samples for a {width}x{height} layer, got {actual}")]
    SampleCount {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("raster {0}x{1} is smaller than the minimum edge of {MIN_RASTER_EDGE}")]
    TooSmall(usize, usize),
    #[error("duplicate band `{0}`")]
    DuplicateBand(BandName),
    #[error("required band `{0}` is missing")]
    MissingBand(BandName),
    #[error("unknown band name `{0}`")]
    UnknownBand(String),
}

/// Spectral band identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Blue,
    Green,
    Red,
    Nir,
}

impl BandName {
    pub const ALL: [BandName; 4] = [BandName::Blue, BandName::Green, BandName::Red, BandName::Nir];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Blue => "blue",
            BandName::Green => "green",
            BandName::Red => "red",
            BandName::Nir => "nir",
        }
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BandName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| RasterError::UnknownBand(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: BandName,
    pub data: Vec<u16>,
}

/// Multi-band image of 16-bit radiance counts.
///
/// Construction guarantees: every band holds `width * height` samples, band
/// names are unique, blue and green are present, and both edges are at least
/// [`MIN_RASTER_EDGE`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultibandRaster {
    width: usize,
    height: usize,
    bands: Vec<Band>,
}

impl MultibandRaster {
    pub fn new(width: usize, height: usize, bands: Vec<Band>) -> Result<Self, RasterError> {
        if width < MIN_RASTER_EDGE || height < MIN_RASTER_EDGE {
            return Err(RasterError::TooSmall(width, height));
        }
        for (i, band) in bands.iter().enumerate() {
            if band.data.len() != width * height {
                return Err(RasterError::SampleCount {
                    width,
                    height,
                    expected: width * height,
                    actual: band.data.len(),
                });
            }
            if bands[..i].iter().any(|b| b.name == band.name) {
                return Err(RasterError::DuplicateBand(band.name));
            }
        }
        for required in [BandName::Blue, BandName::Green] {
            if !bands.iter().any(|b| b.name == required) {
                return Err(RasterError::MissingBand(required));
            }
        }
        Ok(Self { width, height, bands })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band_names(&self) -> Vec<BandName> {
        self.bands.iter().map(|b| b.name).collect()
    }

    pub fn band(&self, name: BandName) -> Option<&[u16]> {
        self.bands.iter().find(|b| b.name == name).map(|b| b.data.as_slice())
    }

    pub fn blue(&self) -> &[u16] {
        self.band(BandName::Blue).expect("blue band checked at construction")
    }

    pub fn green(&self) -> &[u16] {
        self.band(BandName::Green).expect("green band checked at construction")
    }
}

/// Row-major grid of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::SampleCount {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite(i));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds a grid by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                assert!(v.is_finite(), "non-finite grid value at ({r}, {c})");
                data.push(v);
            }
        }
        Self { width, height, data }
    }

    /// Same shape, values mapped through `f`. Panics if `f` yields a
    /// non-finite value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        let data: Vec<f32> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite value");
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        assert!(value.is_finite());
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, width: usize, height: usize) -> Result<(), RasterError> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(RasterError::DimensionMismatch(self.width, self.height, width, height))
        }
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Mean over the pixels where `mask` is true, or `None` if the mask is empty.
    pub fn masked_mean(&self, mask: &BinaryMask) -> Option<f64> {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for (&v, &m) in self.data.iter().zip(mask.data()) {
            if m {
                sum += v as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Row-major boolean map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::SampleCount {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    /// Pixels of `grid` strictly greater than `threshold`.
    pub fn threshold(grid: &Grid, threshold: f32) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            data: grid.data().iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all_false(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn same_shape(&self, width: usize, height: usize) -> Result<(), RasterError> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(RasterError::DimensionMismatch(self.width, self.height, width, height))
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self, RasterError> {
        other.same_shape(self.width, self.height)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn and(&self, other: &Self) -> Result<Self, RasterError> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn xor(&self, other: &Self) -> Result<Self, RasterError> {
        self.zip_with(other, |a, b| a != b)
    }

    /// True when every pixel set in `other` is also set in `self`.
    pub fn contains(&self, other: &Self) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(&a, &b)| a || !b)
    }
}
