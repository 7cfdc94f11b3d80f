//! Pixel-level probability maps from scene-level maps and the CTM, and their
//! gradient-driven fusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, Grid, RasterError};
use crate::tiling::MultiScaleMaps;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Shape(#[from] RasterError),
    #[error("gradient needs at least a 3x3 grid, got {0}x{1}")]
    Undersized(usize, usize),
    #[error("invalid fusion parameters: {0}")]
    Params(String),
}

/// Weights and bounds for map fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Largest weight: on the 256 map for the large-area map, on the 64 map for the dense map.
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// Boundary threshold on the 0–255 gradient scale.
    pub grad_thresh: f64,
    /// At or above this boundary fraction only the dense map is used.
    pub p_hi: f64,
    /// At or below this boundary fraction only the large-area map is used.
    pub p_lo: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            mu1: 0.5,
            mu2: 0.4,
            mu3: 0.1,
            grad_thresh: 19.0,
            p_hi: 0.2,
            p_lo: 0.1,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        let sum = self.mu1 + self.mu2 + self.mu3;
        if (sum - 1.0).abs() > 1e-9 || [self.mu1, self.mu2, self.mu3].iter().any(|&m| m < 0.0) {
            return Err(FusionError::Params(format!(
                "scale weights must be nonnegative and sum to 1 (got {sum})"
            )));
        }
        if !(0.0 <= self.p_lo && self.p_lo < self.p_hi && self.p_hi <= 1.0) {
            return Err(FusionError::Params(format!(
                "need 0 <= p_lo < p_hi <= 1 (got p_lo={}, p_hi={})",
                self.p_lo, self.p_hi
            )));
        }
        if !self.grad_thresh.is_finite() {
            return Err(FusionError::Params("grad_thresh must be finite".into()));
        }
        Ok(())
    }
}

fn weighted_gate(maps: &MultiScaleMaps, gate: &Grid, weights: [f64; 3]) -> Result<Grid, FusionError> {
    let (w, h) = (maps.width(), maps.height());
    for g in [&maps.rho128, &maps.rho64, gate] {
        g.same_shape(w, h)?;
    }
    let data = maps
        .rho256
        .data()
        .iter()
        .zip(maps.rho128.data())
        .zip(maps.rho64.data())
        .zip(gate.data())
        .map(|(((&a, &b), &c), &g)| {
            let v = (weights[0] * a as f64 + weights[1] * b as f64 + weights[2] * c as f64) * g as f64;
            v as f32
        })
        .collect();
    Ok(Grid::new(w, h, data)?)
}

/// `(mu1·ρ256 + mu2·ρ128 + mu3·ρ64) · CTM_SVD`.
pub fn large_area_probability(
    maps: &MultiScaleMaps,
    ctm_svd: &Grid,
    params: &FusionParams,
) -> Result<Grid, FusionError> {
    weighted_gate(maps, ctm_svd, [params.mu1, params.mu2, params.mu3])
}

/// `(mu3·ρ256 + mu2·ρ128 + mu1·ρ64) · CTM_Mean`.
pub fn dense_probability(maps: &MultiScaleMaps, ctm_mean: &Grid, params: &FusionParams) -> Result<Grid, FusionError> {
    weighted_gate(maps, ctm_mean, [params.mu3, params.mu2, params.mu1])
}

/// Raw Sobel magnitude with edge replication at the border.
pub fn sobel_magnitude(grid: &Grid) -> Result<Grid, FusionError> {
    let (w, h) = (grid.width(), grid.height());
    if w < 3 || h < 3 {
        return Err(FusionError::Undersized(w, h));
    }
    let at = |r: isize, c: isize| -> f64 {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        grid.get(r, c) as f64
    };
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            out.push((gx * gx + gy * gy).sqrt() as f32);
        }
    }
    Ok(Grid::new(w, h, out)?)
}

/// Sobel magnitude min-max scaled to `[0, 255]`; a constant magnitude maps to zeros.
pub fn sobel_gradient(grid: &Grid) -> Result<Grid, FusionError> {
    let mag = sobel_magnitude(grid)?;
    let (lo, hi) = mag.min_max().expect("nonempty");
    if hi <= lo {
        return Ok(Grid::zeros(grid.width(), grid.height()));
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    Ok(mag.map(|v| ((v as f64 - lo) / span * 255.0) as f32))
}

/// Pixels whose scaled gradient strictly exceeds `grad_thresh`.
pub fn boundary_mask(gradient: &Grid, grad_thresh: f64) -> BinaryMask {
    let data = gradient.data().iter().map(|&g| g as f64 > grad_thresh).collect();
    BinaryMask::new(gradient.width(), gradient.height(), data).expect("same shape")
}

/// `|bound ∧ cloud| / |cloud|`, or 0 for an empty cloud mask.
pub fn boundary_fraction(bound: &BinaryMask, cloud: &BinaryMask) -> Result<f64, FusionError> {
    bound.same_shape(cloud.width(), cloud.height())?;
    let (mut both, mut total) = (0usize, 0usize);
    for (&b, &c) in bound.data().iter().zip(cloud.data()) {
        if c {
            total += 1;
            both += b as usize;
        }
    }
    Ok(if total == 0 { 0.0 } else { both as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dense,
    Blended,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    /// Boundary fraction.
    #[serde(rename = "P")]
    pub p: f64,
    /// Weight of the dense map.
    pub k: f64,
    pub regime: Regime,
}

impl FusionReport {
    pub fn classify(p: f64, params: &FusionParams) -> Self {
        if p >= params.p_hi {
            Self {
                p,
                k: 1.0,
                regime: Regime::Dense,
            }
        } else if p <= params.p_lo {
            Self {
                p,
                k: 0.0,
                regime: Regime::Large,
            }
        } else {
            Self {
                p,
                k: (p - params.p_lo) / (params.p_hi - params.p_lo),
                regime: Regime::Blended,
            }
        }
    }

    /// `k·dense + (1 − k)·large` with the regime's endpoints taken verbatim.
    pub fn blend(&self, dense: f64, large: f64) -> f64 {
        match self.regime {
            Regime::Dense => dense,
            Regime::Large => large,
            Regime::Blended => self.k * dense + (1.0 - self.k) * large,
        }
    }
}

/// Selects or blends the dense and large-area maps according to `p`.
/// `large` may be omitted when the regime is dense.
pub fn fuse_probabilities(
    dense: &Grid,
    large: Option<&Grid>,
    p: f64,
    params: &FusionParams,
) -> Result<(Grid, FusionReport), FusionError> {
    let report = FusionReport::classify(p, params);
    let fused = match (report.regime, large) {
        (Regime::Dense, _) => dense.clone(),
        (_, None) => {
            return Err(FusionError::Params(
                "large-area map required outside the dense regime".into(),
            ))
        }
        (Regime::Large, Some(l)) => {
            l.same_shape(dense.width(), dense.height())?;
            l.clone()
        }
        (Regime::Blended, Some(l)) => {
            l.same_shape(dense.width(), dense.height())?;
            let data = dense
                .data()
                .iter()
                .zip(l.data())
                .map(|(&d, &lg)| report.blend(d as f64, lg as f64) as f32)
                .collect();
            Grid::new(dense.width(), dense.height(), data)?
        }
    };
    Ok((fused, report))
}
