//! Sliding-window scene classification at three window scales, assembled into
//! per-scale probability maps by pixelwise maximum over overlapping windows.

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{ClassifierBlock, ClassifierError, SceneClassifier, BLOCK_EDGE};
use crate::raster::{BinaryMask, Grid, MultibandRaster};

/// Window edge lengths, largest first.
pub const SCALES: [usize; 3] = [256, 128, 64];

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("raster {width}x{height} cannot be covered by {scale}x{scale} windows")]
    Uncoverable { width: usize, height: usize, scale: usize },
    #[error("unsupported block scale {0} (expected 256, 128 or 64)")]
    UnsupportedScale(usize),
    #[error("window ({row}, {col}) at scale {scale}: {source}")]
    Classifier {
        scale: usize,
        row: usize,
        col: usize,
        #[source]
        source: ClassifierError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub scale: usize,
    pub row: usize,
    pub col: usize,
}

/// Offsets along one axis: multiples of `scale / 2`, plus a final window
/// flush with the far edge when the regular grid stops short of it.
fn axis_offsets(len: usize, scale: usize) -> Vec<usize> {
    let stride = (scale / 2).max(1);
    let mut offsets: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o + scale <= len).collect();
    let last = *offsets.last().expect("len >= scale");
    if last + scale < len {
        offsets.push(len - scale);
    }
    offsets
}

/// All windows of edge `scale`, row-major by offset.
pub fn enumerate_windows(width: usize, height: usize, scale: usize) -> Result<Vec<WindowSpec>, TilingError> {
    if scale == 0 || width < scale || height < scale {
        return Err(TilingError::Uncoverable { width, height, scale });
    }
    let cols = axis_offsets(width, scale);
    let rows = axis_offsets(height, scale);
    Ok(rows
        .iter()
        .flat_map(|&row| cols.iter().map(move |&col| WindowSpec { scale, row, col }))
        .collect())
}

/// A normalized block at its native window size, band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBlock {
    pub edge: usize,
    pub data: Vec<f32>,
}

/// Cuts the window out of every band and divides by the maximum sample over
/// all bands. An all-zero block stays zero.
pub fn normalize_block(raster: &MultibandRaster, window: WindowSpec) -> NormalizedBlock {
    let edge = window.scale;
    let width = raster.width();
    assert!(window.row + edge <= raster.height() && window.col + edge <= width);
    let max = raster
        .bands()
        .iter()
        .flat_map(|b| {
            (window.row..window.row + edge)
                .flat_map(move |r| b.data[r * width + window.col..r * width + window.col + edge].iter())
        })
        .copied()
        .max()
        .unwrap_or(0);
    let mut data = Vec::with_capacity(edge * edge * raster.bands().len());
    for band in raster.bands() {
        for r in window.row..window.row + edge {
            let row = &band.data[r * width + window.col..r * width + window.col + edge];
            if max == 0 {
                data.extend(std::iter::repeat_n(0.0, edge));
            } else {
                data.extend(row.iter().map(|&s| s as f32 / max as f32));
            }
        }
    }
    NormalizedBlock { edge, data }
}

/// Nearest-neighbour replication up to 256x256. Each source pixel becomes a
/// `(256 / edge)`-sided square.
pub fn upscale_block(block: &NormalizedBlock) -> Result<Vec<f32>, TilingError> {
    if !SCALES.contains(&block.edge) {
        return Err(TilingError::UnsupportedScale(block.edge));
    }
    let factor = BLOCK_EDGE / block.edge;
    if factor == 1 {
        return Ok(block.data.clone());
    }
    let plane = block.edge * block.edge;
    let nbands = block.data.len() / plane;
    let mut out = Vec::with_capacity(BLOCK_EDGE * BLOCK_EDGE * nbands);
    for band in block.data.chunks_exact(plane) {
        for src_row in band.chunks_exact(block.edge) {
            let mut line = Vec::with_capacity(BLOCK_EDGE);
            for &v in src_row {
                line.extend(std::iter::repeat_n(v, factor));
            }
            for _ in 0..factor {
                out.extend_from_slice(&line);
            }
        }
    }
    Ok(out)
}

fn classify_window<C: SceneClassifier + ?Sized>(
    raster: &MultibandRaster,
    classifier: &C,
    window: WindowSpec,
) -> Result<f32, TilingError> {
    let wrap = |source| TilingError::Classifier {
        scale: window.scale,
        row: window.row,
        col: window.col,
        source,
    };
    let normalized = normalize_block(raster, window);
    let data = upscale_block(&normalized)?;
    let block = ClassifierBlock::new(raster.band_names(), data).map_err(wrap)?;
    classifier.classify(&block).map(|s| s.value()).map_err(wrap)
}

/// Paints each window's score over its footprint, keeping the pixelwise max.
pub fn paint_max(width: usize, height: usize, scored: &[(WindowSpec, f32)]) -> Grid {
    let mut data = vec![0.0f32; width * height];
    for &(w, score) in scored {
        for r in w.row..w.row + w.scale {
            for v in &mut data[r * width + w.col..r * width + w.col + w.scale] {
                *v = v.max(score);
            }
        }
    }
    Grid::new(width, height, data).expect("scores are finite")
}

/// Probability map and scene mask (`score > threshold`) for one scale.
/// Windows are classified in parallel; assembly is sequential, so the result
/// does not depend on scheduling.
pub fn build_scale_map<C: SceneClassifier + ?Sized>(
    raster: &MultibandRaster,
    classifier: &C,
    scale: usize,
    scene_threshold: f32,
) -> Result<(Grid, BinaryMask), TilingError> {
    let windows = enumerate_windows(raster.width(), raster.height(), scale)?;
    let scored = windows
        .par_iter()
        .map(|&w| classify_window(raster, classifier, w).map(|s| (w, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = paint_max(raster.width(), raster.height(), &scored);
    let mask = BinaryMask::threshold(&grid, scene_threshold);
    Ok((grid, mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleMaps {
    pub rho256: Grid,
    pub rho128: Grid,
    pub rho64: Grid,
    pub mask256: BinaryMask,
    pub mask128: BinaryMask,
    pub mask64: BinaryMask,
}

impl MultiScaleMaps {
    /// Assembles maps from given probability grids, deriving the masks.
    pub fn from_probabilities(rho256: Grid, rho128: Grid, rho64: Grid, scene_threshold: f32) -> Self {
        Self {
            mask256: BinaryMask::threshold(&rho256, scene_threshold),
            mask128: BinaryMask::threshold(&rho128, scene_threshold),
            mask64: BinaryMask::threshold(&rho64, scene_threshold),
            rho256,
            rho128,
            rho64,
        }
    }

    pub fn width(&self) -> usize {
        self.rho256.width()
    }

    pub fn height(&self) -> usize {
        self.rho256.height()
    }

    /// Intersection of the three scene masks.
    pub fn cloud_region(&self) -> BinaryMask {
        self.mask256
            .and(&self.mask128)
            .and_then(|m| m.and(&self.mask64))
            .expect("scale maps share dimensions")
    }
}

pub fn multiscale_maps<C: SceneClassifier + ?Sized>(
    raster: &MultibandRaster,
    classifier: &C,
    scene_threshold: f32,
) -> Result<MultiScaleMaps, TilingError> {
    let (rho256, mask256) = build_scale_map(raster, classifier, 256, scene_threshold)?;
    let (rho128, mask128) = build_scale_map(raster, classifier, 128, scene_threshold)?;
    let (rho64, mask64) = build_scale_map(raster, classifier, 64, scene_threshold)?;
    Ok(MultiScaleMaps {
        rho256,
        rho128,
        rho64,
        mask256,
        mask128,
        mask64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{CloudScore, SpectralMock};
    use crate::raster::{Band, BandName};
    use proptest::prelude::*;

    fn offsets(ws: &[WindowSpec]) -> (Vec<usize>, Vec<usize>) {
        let mut rows: Vec<usize> = ws.iter().map(|w| w.row).collect();
        let mut cols: Vec<usize> = ws.iter().map(|w| w.col).collect();
        rows.dedup();
        rows.sort();
        rows.dedup();
        cols.sort();
        cols.dedup();
        (rows, cols)
    }

    #[test]
    fn window_counts() {
        let ws = enumerate_windows(512, 512, 256).unwrap();
        assert_eq!(ws.len(), 9);
        assert_eq!(offsets(&ws), (vec![0, 128, 256], vec![0, 128, 256]));

        let ws = enumerate_windows(256, 256, 256).unwrap();
        assert_eq!(
            ws,
            vec![WindowSpec {
                scale: 256,
                row: 0,
                col: 0
            }]
        );

        let ws = enumerate_windows(300, 256, 256).unwrap();
        assert_eq!(offsets(&ws), (vec![0], vec![0, 44]));

        let ws = enumerate_windows(256, 256, 128).unwrap();
        assert_eq!(ws.len(), 9);
        assert_eq!(offsets(&ws).0, vec![0, 64, 128]);
    }

    #[test]
    fn small_raster_is_uncoverable() {
        assert!(matches!(
            enumerate_windows(100, 300, 128),
            Err(TilingError::Uncoverable { .. })
        ));
    }

    fn raster_from(w: usize, h: usize, blue: Vec<u16>, green: Vec<u16>) -> MultibandRaster {
        MultibandRaster::new(
            w,
            h,
            vec![
                Band {
                    name: BandName::Blue,
                    data: blue,
                },
                Band {
                    name: BandName::Green,
                    data: green,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn normalization_uses_joint_maximum() {
        let mut blue = vec![0u16; 64 * 64];
        let mut green = vec![0u16; 64 * 64];
        blue[0] = 1000;
        green[1] = 2000;
        let r = raster_from(64, 64, blue, green);
        let block = normalize_block(
            &r,
            WindowSpec {
                scale: 64,
                row: 0,
                col: 0,
            },
        );
        assert_eq!(block.data[0], 0.5);
        assert_eq!(block.data[64 * 64 + 1], 1.0);

        let zero = raster_from(64, 64, vec![0; 4096], vec![0; 4096]);
        let block = normalize_block(
            &zero,
            WindowSpec {
                scale: 64,
                row: 0,
                col: 0,
            },
        );
        assert!(block.data.iter().all(|&v| v == 0.0));

        let flat = raster_from(64, 64, vec![37; 4096], vec![37; 4096]);
        let block = normalize_block(
            &flat,
            WindowSpec {
                scale: 64,
                row: 0,
                col: 0,
            },
        );
        assert!(block.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn upscaling_replicates_pixels() {
        let data: Vec<f32> = (0..64 * 64).map(|i| i as f32 / 4096.0).collect();
        let up = upscale_block(&NormalizedBlock {
            edge: 64,
            data: data.clone(),
        })
        .unwrap();
        assert_eq!(up.len(), 256 * 256);
        for r in 0..256 {
            for c in 0..256 {
                assert_eq!(up[r * 256 + c], data[(r / 4) * 64 + c / 4]);
            }
        }

        let mut single = vec![0.0; 128 * 128];
        single[0] = 0.7;
        let up = upscale_block(&NormalizedBlock {
            edge: 128,
            data: single,
        })
        .unwrap();
        let nonzero: Vec<usize> = (0..up.len()).filter(|&i| up[i] != 0.0).collect();
        assert_eq!(nonzero, vec![0, 1, 256, 257]);

        let full: Vec<f32> = (0..256 * 256).map(|i| (i % 7) as f32 / 7.0).collect();
        assert_eq!(
            upscale_block(&NormalizedBlock {
                edge: 256,
                data: full.clone()
            })
            .unwrap(),
            full
        );

        assert!(matches!(
            upscale_block(&NormalizedBlock {
                edge: 32,
                data: vec![0.0; 1024]
            }),
            Err(TilingError::UnsupportedScale(32))
        ));
    }

    #[test]
    fn painting_keeps_maximum() {
        let a = WindowSpec {
            scale: 64,
            row: 0,
            col: 0,
        };
        let b = WindowSpec {
            scale: 64,
            row: 0,
            col: 64,
        };
        let g = paint_max(128, 64, &[(a, 0.2), (b, 0.9)]);
        assert_eq!(g.get(10, 10), 0.2);
        assert_eq!(g.get(10, 100), 0.9);

        let c = WindowSpec {
            scale: 64,
            row: 0,
            col: 32,
        };
        let g = paint_max(128, 64, &[(a, 0.3), (c, 0.7)]);
        assert_eq!(g.get(0, 40), 0.7);
        assert_eq!(g.get(0, 10), 0.3);
        let g2 = paint_max(128, 64, &[(c, 0.7), (a, 0.3)]);
        assert_eq!(g, g2);
    }

    #[test]
    fn uniform_raster_gives_constant_maps() {
        let r = raster_from(256, 256, vec![3000; 65536], vec![2000; 65536]);
        let maps = multiscale_maps(&r, &SpectralMock::default(), 0.5).unwrap();
        for g in [&maps.rho256, &maps.rho128, &maps.rho64] {
            let (lo, hi) = g.min_max().unwrap();
            assert_eq!(lo, hi);
        }
        // 2 - 0.95 * 2/3 saturates
        assert_eq!(maps.rho64.get(0, 0), 1.0);
        assert_eq!(maps.cloud_region().count(), 65536);

        let zero = raster_from(256, 256, vec![0; 65536], vec![0; 65536]);
        let maps = multiscale_maps(&zero, &SpectralMock::default(), 0.5).unwrap();
        assert!(maps.mask256.is_all_false() && maps.mask128.is_all_false() && maps.mask64.is_all_false());
    }

    struct Failing;
    impl SceneClassifier for Failing {
        fn classify(&self, _: &ClassifierBlock) -> Result<CloudScore, ClassifierError> {
            Err(ClassifierError::Backend("boom".into()))
        }
    }

    #[test]
    fn classifier_errors_abort() {
        let r = raster_from(64, 64, vec![0; 4096], vec![0; 4096]);
        assert!(matches!(
            build_scale_map(&r, &Failing, 64, 0.5),
            Err(TilingError::Classifier { scale: 64, .. })
        ));
    }

    proptest! {
        #[test]
        fn windows_cover_every_pixel(w in 64usize..700, h in 64usize..700, si in 0usize..3) {
            let scale = SCALES[si];
            prop_assume!(w >= scale && h >= scale);
            let ws = enumerate_windows(w, h, scale).unwrap();
            let mut covered = vec![false; w * h];
            for win in &ws {
                prop_assert!(win.row + scale <= h && win.col + scale <= w);
                for r in win.row..win.row + scale {
                    for c in win.col..win.col + scale {
                        covered[r * w + c] = true;
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c));
        }

        #[test]
        fn painting_is_order_invariant_and_monotone(
            scores in proptest::collection::vec(0.0f32..=1.0, 9),
            extra in 0.0f32..=1.0,
        ) {
            let ws = enumerate_windows(128, 128, 64).unwrap();
            let scored: Vec<_> = ws.iter().copied().zip(scores).collect();
            let mut reversed = scored.clone();
            reversed.reverse();
            let g = paint_max(128, 128, &scored);
            prop_assert_eq!(&g, &paint_max(128, 128, &reversed));
            let mut more = scored.clone();
            more.push((WindowSpec { scale: 64, row: 10, col: 20 }, extra));
            let g2 = paint_max(128, 128, &more);
            prop_assert!(g2.data().iter().zip(g.data()).all(|(a, b)| a >= b));
        }

        #[test]
        fn upscaling_preserves_value_set(seed in any::<u64>(), ei in 0usize..3) {
            use rand::{Rng, SeedableRng};
            let edge = SCALES[ei];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..edge * edge).map(|_| rng.gen_range(0..5) as f32 / 4.0).collect();
            let up = upscale_block(&NormalizedBlock { edge, data: data.clone() }).unwrap();
            let set = |v: &[f32]| {
                let mut s: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
                s.sort();
                s.dedup();
                s
            };
            prop_assert_eq!(set(&data), set(&up));
        }
    }
}
