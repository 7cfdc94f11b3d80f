//! Adaptive thresholds, the initial mask, distance-weighted expansion and
//! the final cloud mask.

use serde::{Deserialize, Serialize};

use crate::edt::euclidean_distance_transform;
use crate::fusion::FusionReport;
use crate::raster::{BinaryMask, Grid, RasterError};

/// Degenerate cases met while extracting thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskNote {
    /// The 256 scene mask was empty; the dense threshold fell back to 1.
    EmptyMask256,
    /// The 256 and 64 scene masks agree everywhere; the large-area threshold
    /// fell back to the dense threshold.
    EmptyScaleDifference,
    /// The 128 scene mask was empty; the compensation probability is 0.
    EmptyMask128,
    /// The initial mask was empty; no expansion took place.
    EmptyInitialMask,
}

/// Parameters of the expansion band radius `clamp(intercept − slope·P, min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionParams {
    pub dist_intercept: f64,
    pub dist_slope: f64,
    pub dist_min: f64,
    pub dist_max: f64,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self {
            dist_intercept: 150.0,
            dist_slope: 500.0,
            dist_min: 50.0,
            dist_max: 100.0,
        }
    }
}

impl ExpansionParams {
    pub fn band_radius(&self, p: f64) -> f64 {
        (self.dist_intercept - self.dist_slope * p).clamp(self.dist_min, self.dist_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub mu_dense: f64,
    pub mu_large: f64,
    pub mu_final: f64,
    pub rho_mean: f64,
    pub dist_max: f64,
}

/// Mean fused probability under the 256 scene mask; 1 when the mask is empty.
pub fn dense_threshold(rho_fused: &Grid, mask256: &BinaryMask) -> Result<(f64, Option<MaskNote>), RasterError> {
    mask256.same_shape(rho_fused.width(), rho_fused.height())?;
    Ok(match rho_fused.masked_mean(mask256) {
        Some(m) => (m, None),
        None => (1.0, Some(MaskNote::EmptyMask256)),
    })
}

/// Mean fused probability where the 256 and 64 scene masks disagree; falls
/// back to `mu_dense` when they agree everywhere.
pub fn large_threshold(
    rho_fused: &Grid,
    mask256: &BinaryMask,
    mask64: &BinaryMask,
    mu_dense: f64,
) -> Result<(f64, Option<MaskNote>), RasterError> {
    mask256.same_shape(rho_fused.width(), rho_fused.height())?;
    let diff = mask256.xor(mask64)?;
    Ok(match rho_fused.masked_mean(&diff) {
        Some(m) => (m, None),
        None => (mu_dense, Some(MaskNote::EmptyScaleDifference)),
    })
}

/// Segmentation threshold: blended between the dense and large-area
/// thresholds with the same weights used to fuse the maps.
pub fn adaptive_threshold(mu_dense: f64, mu_large: f64, report: &FusionReport) -> f64 {
    report.blend(mu_dense, mu_large)
}

/// Pixels strictly above `mu_final`.
pub fn initial_mask(rho_fused: &Grid, mu_final: f64) -> BinaryMask {
    let data = rho_fused.data().iter().map(|&v| v as f64 > mu_final).collect();
    BinaryMask::new(rho_fused.width(), rho_fused.height(), data).expect("same shape")
}

/// Mean fused probability under the 128 scene mask; 0 when empty.
pub fn compensation_probability(
    rho_fused: &Grid,
    mask128: &BinaryMask,
) -> Result<(f64, Option<MaskNote>), RasterError> {
    mask128.same_shape(rho_fused.width(), rho_fused.height())?;
    Ok(match rho_fused.masked_mean(mask128) {
        Some(m) => (m, None),
        None => (0.0, Some(MaskNote::EmptyMask128)),
    })
}

/// Raises probability near the initial mask: a pixel at distance
/// `0 < d ≤ dist_max` gains `(dist_max − d) / dist_max · rho_mean`, capped at 1.
/// Mask pixels and pixels beyond the band are left as they are.
pub fn distance_weighted_probability(
    rho_fused: &Grid,
    m_init: &BinaryMask,
    dist_max: f64,
    rho_mean: f64,
) -> Result<(Grid, Option<MaskNote>), RasterError> {
    m_init.same_shape(rho_fused.width(), rho_fused.height())?;
    if m_init.is_all_false() {
        return Ok((rho_fused.clone(), Some(MaskNote::EmptyInitialMask)));
    }
    let dist = euclidean_distance_transform(m_init);
    let data = rho_fused
        .data()
        .iter()
        .zip(dist.data())
        .map(|(&rho, &d)| {
            let d = d as f64;
            if d > 0.0 && d <= dist_max {
                let boosted = rho as f64 + (dist_max - d) / dist_max * rho_mean;
                (boosted.min(1.0) as f32).max(rho)
            } else {
                rho
            }
        })
        .collect();
    Ok((Grid::new(rho_fused.width(), rho_fused.height(), data)?, None))
}

/// Pixels of the distance-weighted map strictly above `mu_final`.
pub fn final_mask(rho_dist: &Grid, mu_final: f64) -> BinaryMask {
    initial_mask(rho_dist, mu_final)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionParams;

    fn grid(v: &[f32]) -> Grid {
        Grid::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn mask(v: &[bool]) -> BinaryMask {
        BinaryMask::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn dense_threshold_cases() {
        let (mu, note) = dense_threshold(&grid(&[0.4, 0.4, 0.9]), &mask(&[true, true, false])).unwrap();
        assert!((mu - 0.4).abs() < 1e-7 && note.is_none());
        let (mu, _) = dense_threshold(&grid(&[0.2, 0.8, 0.1]), &mask(&[true, true, false])).unwrap();
        assert!((mu - 0.5).abs() < 1e-7);
        let (mu, note) = dense_threshold(&grid(&[0.2, 0.8]), &mask(&[false, false])).unwrap();
        assert_eq!((mu, note), (1.0, Some(MaskNote::EmptyMask256)));
    }

    #[test]
    fn large_threshold_cases() {
        let rho = grid(&[0.1, 0.2, 0.3, 0.4]);
        let full = mask(&[true; 4]);
        let empty = mask(&[false; 4]);
        let (mu, note) = large_threshold(&rho, &full, &empty, 0.9).unwrap();
        assert!((mu - 0.25).abs() < 1e-7 && note.is_none());
        let (mu, note) = large_threshold(&rho, &full, &full, 0.9).unwrap();
        assert_eq!((mu, note), (0.9, Some(MaskNote::EmptyScaleDifference)));

        let rho = grid(&[0.1, 0.2, 0.3, 0.4, 0.99]);
        let m256 = mask(&[true, true, false, false, true]);
        let m64 = mask(&[false, false, true, true, true]);
        let (mu, _) = large_threshold(&rho, &m256, &m64, 0.0).unwrap();
        assert!((mu - 0.25).abs() < 1e-7);
    }

    #[test]
    fn adaptive_threshold_cases() {
        let p = FusionParams::default();
        let at = |pp: f64, d: f64, l: f64| adaptive_threshold(d, l, &FusionReport::classify(pp, &p));
        assert_eq!(at(0.25, 0.6, 0.2), 0.6);
        assert_eq!(at(0.05, 0.6, 0.3), 0.3);
        assert!((at(0.15, 0.6, 0.2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn initial_mask_is_strict() {
        assert_eq!(initial_mask(&grid(&[0.5, 0.50001]), 0.5).data(), &[false, true]);
        assert!(initial_mask(&grid(&[1.0, 0.3]), 1.0).is_all_false());
        assert_eq!(initial_mask(&grid(&[0.7; 3]), 0.5).count(), 3);
    }

    #[test]
    fn compensation_cases() {
        let (m, _) = compensation_probability(&grid(&[0.3, 0.3, 0.8]), &mask(&[true, true, false])).unwrap();
        assert!((m - 0.3).abs() < 1e-7);
        let (m, note) = compensation_probability(&grid(&[0.3]), &mask(&[false])).unwrap();
        assert_eq!((m, note), (0.0, Some(MaskNote::EmptyMask128)));
        let (m, _) = compensation_probability(&grid(&[0.2, 0.4]), &mask(&[true, true])).unwrap();
        assert!((m - 0.3).abs() < 1e-7);
    }

    #[test]
    fn band_radius_endpoints() {
        let e = ExpansionParams::default();
        assert_eq!(e.band_radius(0.1), 100.0);
        assert_eq!(e.band_radius(0.2), 50.0);
        assert_eq!(e.band_radius(0.3), 50.0);
        assert_eq!(e.band_radius(0.0), 100.0);
        assert_eq!(e.band_radius(0.15), 75.0);
    }

    #[test]
    fn distance_weighting() {
        // cloud at column 0; distances along the row are 0, 1, 2, ...
        let w = 120;
        let m = BinaryMask::from_fn(w, 1, |_, c| c == 0);
        let rho = Grid::filled(w, 1, 0.3);
        let (out, note) = distance_weighted_probability(&rho, &m, 100.0, 0.4).unwrap();
        assert!(note.is_none());
        assert_eq!(out.get(0, 0), 0.3);
        assert!((out.get(0, 50) - 0.5).abs() < 1e-6);
        assert_eq!(out.get(0, 100), 0.3);
        assert_eq!(out.get(0, 110), 0.3);

        let high = Grid::filled(w, 1, 0.9);
        let (out, _) = distance_weighted_probability(&high, &m, 100.0, 0.4).unwrap();
        assert_eq!(out.get(0, 1), 1.0);

        let (out, note) = distance_weighted_probability(&rho, &BinaryMask::empty(w, 1), 100.0, 0.4).unwrap();
        assert_eq!((out, note), (rho, Some(MaskNote::EmptyInitialMask)));
    }

    #[test]
    fn final_mask_cases() {
        let rho = grid(&[0.3, 0.5, 0.2]);
        assert_eq!(final_mask(&rho, 0.4).data(), &[false, true, false]);
        assert_eq!(final_mask(&grid(&[0.1, 0.2]), 0.0).count(), 2);
    }
}
