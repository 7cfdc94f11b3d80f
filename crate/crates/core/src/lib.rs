//! Weakly supervised cloud detection for four-band optical imagery.
//!
//! A scene-level classifier scores sliding windows at three scales; the
//! scores are combined with the cloud transmission map `2B − 0.95G` into
//! pixel probabilities, which are thresholded adaptively and expanded
//! around confident cloud pixels.

pub mod classifier;
pub mod config;
pub mod ctm;
pub mod edt;
pub mod fusion;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod raster_io;
pub mod render;
pub mod svd;
pub mod synth;
pub mod tiling;
