//! End-to-end detection: scene-level maps, CTM, fusion, thresholds and the
//! final mask.

use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::classifier::SceneClassifier;
use crate::config::PipelineConfig;
use crate::ctm::{self, CtmBundle, CtmError};
use crate::fusion::{self, FusionError, FusionParams, FusionReport, Regime};
use crate::mask::{self, ExpansionParams, MaskNote, ThresholdSet};
use crate::raster::{BinaryMask, Grid, MultibandRaster, RasterError};
use crate::tiling::{self, MultiScaleMaps, TilingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SceneMaps,
    Ctm,
    Fusion,
    Masks,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::SceneMaps => "scene-maps",
            Stage::Ctm => "ctm",
            Stage::Fusion => "fusion",
            Stage::Masks => "masks",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Ctm(#[from] CtmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

fn at<E: Into<StageError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: e.into(),
    }
}

/// Everything computed by one detection run.
#[derive(Debug, Clone)]
pub struct Detection {
    pub maps: MultiScaleMaps,
    pub ctm: CtmBundle,
    pub gradient: Grid,
    pub boundary: BinaryMask,
    pub rho_dense: Grid,
    pub rho_large: Option<Grid>,
    pub rho_fused: Grid,
    pub rho_dist: Grid,
    pub initial_mask: BinaryMask,
    pub final_mask: BinaryMask,
    pub report: FusionReport,
    pub thresholds: ThresholdSet,
    pub notes: Vec<MaskNote>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(Stage, f64)>,
}

/// Scene maps and CTM variants, which depend on the raster, the classifier
/// and the scene/CTM settings but not on the fusion or expansion constants.
/// The rank-k CTM is computed on first use and then reused.
pub struct Prepared {
    pub maps: MultiScaleMaps,
    pub ctm_raw: Grid,
    pub ctm_refined: Grid,
    pub ctm_mean: Grid,
    svd_rank: usize,
    ctm_svd: OnceLock<Grid>,
    timings: Vec<(Stage, f64)>,
}

pub fn prepare<C: SceneClassifier + ?Sized>(
    raster: &MultibandRaster,
    classifier: &C,
    config: &PipelineConfig,
) -> Result<Prepared, PipelineError> {
    let clock = Instant::now();
    let maps =
        tiling::multiscale_maps(raster, classifier, config.scene_threshold as f32).map_err(at(Stage::SceneMaps))?;
    let scene_secs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let ctm_raw = ctm::compute_ctm(raster);
    let ctm_refined = ctm::refine_ctm(&ctm_raw, &maps).map_err(at(Stage::Ctm))?;
    let ctm_mean = ctm::normalize_grid(&ctm::mean_filter(&ctm_refined, config.mean_window).map_err(at(Stage::Ctm))?);
    Ok(Prepared {
        maps,
        ctm_raw,
        ctm_refined,
        ctm_mean,
        svd_rank: config.svd_rank,
        ctm_svd: OnceLock::new(),
        timings: vec![
            (Stage::SceneMaps, scene_secs),
            (Stage::Ctm, clock.elapsed().as_secs_f64()),
        ],
    })
}

impl Prepared {
    /// Normalized rank-k reconstruction of the refined CTM.
    pub fn ctm_svd(&self) -> &Grid {
        self.ctm_svd
            .get_or_init(|| ctm::normalize_grid(&ctm::truncated_svd(&self.ctm_refined, self.svd_rank)))
    }

    /// Fusion, thresholds and expansion. The rank-k CTM and the large-area
    /// map are only computed when the fusion regime needs them, or always
    /// when `all_intermediates` is set.
    pub fn finish(
        &self,
        params: &FusionParams,
        expansion: &ExpansionParams,
        all_intermediates: bool,
    ) -> Result<Detection, PipelineError> {
        let maps = &self.maps;
        let mut timings = self.timings.clone();
        let clock = Instant::now();
        let gradient = fusion::sobel_gradient(&self.ctm_refined).map_err(at(Stage::Fusion))?;
        let boundary = fusion::boundary_mask(&gradient, params.grad_thresh);
        let p = fusion::boundary_fraction(&boundary, &maps.cloud_region()).map_err(at(Stage::Fusion))?;
        let report = FusionReport::classify(p, params);

        let ctm_svd = (all_intermediates || report.regime != Regime::Dense).then(|| self.ctm_svd().clone());
        let rho_dense = fusion::dense_probability(maps, &self.ctm_mean, params).map_err(at(Stage::Fusion))?;
        let rho_large = ctm_svd
            .as_ref()
            .map(|svd| fusion::large_area_probability(maps, svd, params))
            .transpose()
            .map_err(at(Stage::Fusion))?;
        let (rho_fused, report) =
            fusion::fuse_probabilities(&rho_dense, rho_large.as_ref(), p, params).map_err(at(Stage::Fusion))?;
        timings.push((Stage::Fusion, clock.elapsed().as_secs_f64()));

        let clock = Instant::now();
        let mut notes = Vec::new();
        let (mu_dense, note) = mask::dense_threshold(&rho_fused, &maps.mask256).map_err(at(Stage::Masks))?;
        notes.extend(note);
        let (mu_large, note) =
            mask::large_threshold(&rho_fused, &maps.mask256, &maps.mask64, mu_dense).map_err(at(Stage::Masks))?;
        notes.extend(note);
        let mu_final = mask::adaptive_threshold(mu_dense, mu_large, &report);
        let initial_mask = mask::initial_mask(&rho_fused, mu_final);
        let (rho_mean, note) = mask::compensation_probability(&rho_fused, &maps.mask128).map_err(at(Stage::Masks))?;
        notes.extend(note);
        let dist_max = expansion.band_radius(p);
        let (rho_dist, note) = mask::distance_weighted_probability(&rho_fused, &initial_mask, dist_max, rho_mean)
            .map_err(at(Stage::Masks))?;
        notes.extend(note);
        let final_mask = mask::final_mask(&rho_dist, mu_final);
        timings.push((Stage::Masks, clock.elapsed().as_secs_f64()));

        Ok(Detection {
            maps: maps.clone(),
            ctm: CtmBundle {
                ctm_raw: self.ctm_raw.clone(),
                ctm_refined: self.ctm_refined.clone(),
                ctm_mean: self.ctm_mean.clone(),
                ctm_svd,
            },
            gradient,
            boundary,
            rho_dense,
            rho_large,
            rho_fused,
            rho_dist,
            initial_mask,
            final_mask,
            report,
            thresholds: ThresholdSet {
                mu_dense,
                mu_large,
                mu_final,
                rho_mean,
                dist_max,
            },
            notes,
            timings,
        })
    }
}

/// Runs the whole detector on one raster.
pub fn detect<C: SceneClassifier + ?Sized>(
    raster: &MultibandRaster,
    classifier: &C,
    config: &PipelineConfig,
    all_intermediates: bool,
) -> Result<Detection, PipelineError> {
    prepare(raster, classifier, config)?.finish(&config.fusion, &config.expansion, all_intermediates)
}

/// Audit record written next to every final mask. Holds only values that
/// are reproducible run to run; timings are reported separately.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub classifier: String,
    pub width: usize,
    pub height: usize,
    pub bands: Vec<String>,
    pub fusion: FusionReport,
    pub thresholds: ThresholdSet,
    pub notes: Vec<MaskNote>,
    pub initial_mask_pixels: usize,
    pub final_mask_pixels: usize,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig, classifier: String, raster: &MultibandRaster, det: &Detection) -> Self {
        Self {
            config: config.clone(),
            classifier,
            width: raster.width(),
            height: raster.height(),
            bands: raster.band_names().iter().map(|b| b.to_string()).collect(),
            fusion: det.report,
            thresholds: det.thresholds,
            notes: det.notes.clone(),
            initial_mask_pixels: det.initial_mask.count(),
            final_mask_pixels: det.final_mask.count(),
        }
    }
}
