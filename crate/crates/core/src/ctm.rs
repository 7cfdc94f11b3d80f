//! Cloud thickness map (CTM) and its conditioned variants.

use thiserror::Error;

use crate::raster::{Grid, MultibandRaster};
use crate::svd;
use crate::tiling::MultiScaleMaps;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmError {
    #[error("mean filter window must be odd and at least 1, got {0}")]
    Window(usize),
    #[error("CTM is {0}x{1} but scene masks are {2}x{3}")]
    Dimensions(usize, usize, usize, usize),
}

/// `2·B − 0.95·G` on raw counts. Negative values are kept.
pub fn compute_ctm(raster: &MultibandRaster) -> Grid {
    let data = raster
        .blue()
        .iter()
        .zip(raster.green())
        .map(|(&b, &g)| (2.0 * b as f64 - 0.95 * g as f64) as f32)
        .collect();
    Grid::new(raster.width(), raster.height(), data).expect("finite CTM")
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &[f32]) -> f32 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f32::total_cmp);
    *m
}

/// Halves bright pixels (strictly above the median) lying outside the
/// intersection of the three scene masks. Pixels with nonpositive CTM keep
/// their value so refinement never raises a pixel.
pub fn refine_ctm(ctm: &Grid, maps: &MultiScaleMaps) -> Result<Grid, CtmError> {
    if ctm.width() != maps.width() || ctm.height() != maps.height() {
        return Err(CtmError::Dimensions(
            ctm.width(),
            ctm.height(),
            maps.width(),
            maps.height(),
        ));
    }
    let median = lower_median(ctm.data());
    let cloud = maps.cloud_region();
    let data = ctm
        .data()
        .iter()
        .zip(cloud.data())
        .map(
            |(&v, &in_cloud)| {
                if v > median && !in_cloud {
                    v.min(v * 0.5)
                } else {
                    v
                }
            },
        )
        .collect();
    Ok(Grid::new(ctm.width(), ctm.height(), data).expect("finite"))
}

/// Box mean over a `window x window` neighbourhood clipped to the image;
/// border pixels average the in-bounds subset only.
pub fn mean_filter(grid: &Grid, window: usize) -> Result<Grid, CtmError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(CtmError::Window(window));
    }
    let (w, h) = (grid.width(), grid.height());
    let half = window / 2;
    // summed-area table with a zero border row/column
    let stride = w + 1;
    let mut sat = vec![0.0f64; (h + 1) * stride];
    for r in 0..h {
        let mut row_sum = 0.0f64;
        for c in 0..w {
            row_sum += grid.get(r, c) as f64;
            sat[(r + 1) * stride + c + 1] = sat[r * stride + c + 1] + row_sum;
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let r0 = r.saturating_sub(half);
        let r1 = (r + half + 1).min(h);
        for c in 0..w {
            let c0 = c.saturating_sub(half);
            let c1 = (c + half + 1).min(w);
            let sum = sat[r1 * stride + c1] - sat[r0 * stride + c1] - sat[r1 * stride + c0] + sat[r0 * stride + c0];
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            out.push((sum / count) as f32);
        }
    }
    Ok(Grid::new(w, h, out).expect("finite"))
}

/// Rank-`k` approximation, `k` clamped to the smaller grid edge.
pub fn truncated_svd(grid: &Grid, k: usize) -> Grid {
    svd::truncated_svd(grid, k)
}

/// Min-max scaling to `[0, 1]`. A constant grid maps to zeros.
pub fn normalize_grid(grid: &Grid) -> Grid {
    let Some((lo, hi)) = grid.min_max() else {
        return grid.clone();
    };
    if hi <= lo {
        return Grid::zeros(grid.width(), grid.height());
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    grid.map(|v| ((v as f64 - lo) / span).clamp(0.0, 1.0) as f32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmBundle {
    pub ctm_raw: Grid,
    pub ctm_refined: Grid,
    /// Normalized mean-filtered refined CTM.
    pub ctm_mean: Grid,
    /// Normalized rank-k refined CTM; absent until requested.
    pub ctm_svd: Option<Grid>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Band, BandName, BinaryMask};
    use proptest::prelude::*;

    fn raster(b: u16, g: u16) -> MultibandRaster {
        MultibandRaster::new(
            64,
            64,
            vec![
                Band {
                    name: BandName::Blue,
                    data: vec![b; 4096],
                },
                Band {
                    name: BandName::Green,
                    data: vec![g; 4096],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn ctm_hand_values() {
        assert_eq!(compute_ctm(&raster(0, 0)).get(0, 0), 0.0);
        assert_eq!(compute_ctm(&raster(200, 100)).get(5, 5), 305.0);
        assert_eq!(compute_ctm(&raster(0, 100)).get(5, 5), -95.0);
    }

    fn maps_with(w: usize, h: usize, m256: BinaryMask, m128: BinaryMask, m64: BinaryMask) -> MultiScaleMaps {
        MultiScaleMaps {
            rho256: Grid::zeros(w, h),
            rho128: Grid::zeros(w, h),
            rho64: Grid::zeros(w, h),
            mask256: m256,
            mask128: m128,
            mask64: m64,
        }
    }

    #[test]
    fn refinement_rules() {
        let empty = BinaryMask::empty(4, 4);
        let maps = maps_with(4, 4, empty.clone(), empty.clone(), empty.clone());
        let flat = Grid::filled(4, 4, 3.0);
        assert_eq!(refine_ctm(&flat, &maps).unwrap(), flat);

        let mut bright = Grid::filled(4, 4, 1.0);
        bright.set(1, 2, 10.0);
        let out = refine_ctm(&bright, &maps).unwrap();
        assert_eq!(out.get(1, 2), 5.0);
        assert_eq!(out.get(0, 0), 1.0);

        let mut in_cloud = BinaryMask::empty(4, 4);
        in_cloud.set(1, 2, true);
        let maps = maps_with(4, 4, in_cloud.clone(), in_cloud.clone(), in_cloud.clone());
        assert_eq!(refine_ctm(&bright, &maps).unwrap().get(1, 2), 10.0);

        // only two of the three scales claim the pixel: not cloud region
        let maps = maps_with(4, 4, in_cloud.clone(), in_cloud, empty);
        assert_eq!(refine_ctm(&bright, &maps).unwrap().get(1, 2), 5.0);
    }

    #[test]
    fn lower_median_of_even_count() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn mean_filter_cases() {
        let flat = Grid::filled(40, 30, 2.5);
        assert_eq!(mean_filter(&flat, 29).unwrap(), flat);

        let mut impulse = Grid::zeros(61, 61);
        impulse.set(30, 30, 1.0);
        let out = mean_filter(&impulse, 29).unwrap();
        for r in 0..61usize {
            for c in 0..61usize {
                let inside = r.abs_diff(30) <= 14 && c.abs_diff(30) <= 14;
                let expect = if inside { 1.0 / 841.0 } else { 0.0 };
                assert_eq!(out.get(r, c), expect as f32, "({r},{c})");
            }
        }

        let g = Grid::from_fn(7, 5, |r, c| (r * 7 + c) as f32);
        assert_eq!(mean_filter(&g, 1).unwrap(), g);
        assert_eq!(mean_filter(&g, 4), Err(CtmError::Window(4)));
        assert_eq!(mean_filter(&g, 0), Err(CtmError::Window(0)));
    }

    #[test]
    fn mean_filter_clips_at_borders() {
        let g = Grid::from_fn(3, 1, |_, c| c as f32);
        // corners see two pixels, centre sees three
        assert_eq!(mean_filter(&g, 3).unwrap().data(), &[0.5, 1.0, 1.5]);
    }

    #[test]
    fn normalization_cases() {
        let g = Grid::new(3, 1, vec![-95.0, 305.0, 105.0]).unwrap();
        assert_eq!(normalize_grid(&g).data(), &[0.0, 1.0, 0.5]);
        let unit = Grid::new(4, 1, vec![0.0, 0.25, 1.0, 0.7]).unwrap();
        assert_eq!(normalize_grid(&unit), unit);
        assert_eq!(normalize_grid(&Grid::filled(3, 3, 7.0)), Grid::zeros(3, 3));
    }

    fn arb_grid(max: usize) -> impl Strategy<Value = Grid> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            proptest::collection::vec(-1000.0f32..1000.0, w * h).prop_map(move |d| Grid::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn refinement_never_raises(g in arb_grid(12), bits in proptest::collection::vec(any::<bool>(), 144)) {
            let (w, h) = (g.width(), g.height());
            let m = BinaryMask::new(w, h, bits[..w * h].to_vec()).unwrap();
            let maps = maps_with(w, h, m.clone(), m.clone(), m);
            let median = lower_median(g.data());
            let out = refine_ctm(&g, &maps).unwrap();
            for (&a, &b) in out.data().iter().zip(g.data()) {
                prop_assert!(a <= b);
                if b <= median {
                    prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn normalization_range_and_extrema(g in arb_grid(10)) {
            let n = normalize_grid(&g);
            prop_assert!(n.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let (lo, hi) = g.min_max().unwrap();
            if hi > lo {
                for (&orig, &norm) in g.data().iter().zip(n.data()) {
                    if orig == hi { prop_assert_eq!(norm, 1.0); }
                    if orig == lo { prop_assert_eq!(norm, 0.0); }
                }
            }
        }

        #[test]
        fn mean_filter_preserves_interior_mean(g in arb_grid(9)) {
            // zero frame: every window that sees data lies fully in bounds
            let pad = 2;
            let (w, h) = (g.width() + 4 * pad, g.height() + 4 * pad);
            let big = Grid::from_fn(w, h, |r, c| {
                if r >= 2 * pad && c >= 2 * pad && r < 2 * pad + g.height() && c < 2 * pad + g.width() {
                    g.get(r - 2 * pad, c - 2 * pad)
                } else {
                    0.0
                }
            });
            let out = mean_filter(&big, 2 * pad + 1).unwrap();
            let sum_in: f64 = big.data().iter().map(|&v| v as f64).sum();
            let sum_out: f64 = out.data().iter().map(|&v| v as f64).sum();
            prop_assert!((sum_in - sum_out).abs() <= 1e-3 * (1.0 + sum_in.abs()));
        }
    }
}
