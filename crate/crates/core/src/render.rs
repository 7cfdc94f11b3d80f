//! PNG previews of grids and masks.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::raster::{BinaryMask, Grid};

const STOPS: [(f32, [f32; 3]); 5] = [
    (0.0, [0.0, 0.0, 255.0]),
    (0.25, [0.0, 255.0, 255.0]),
    (0.5, [0.0, 255.0, 0.0]),
    (0.75, [255.0, 255.0, 0.0]),
    (1.0, [255.0, 0.0, 0.0]),
];

/// Blue at 0 through cyan, green and yellow to red at 1. Values outside
/// `[0, 1]` are clamped.
pub fn colormap(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let i = STOPS
        .iter()
        .position(|&(t, _)| t >= v)
        .unwrap_or(STOPS.len() - 1)
        .max(1);
    let (t0, c0) = STOPS[i - 1];
    let (t1, c1) = STOPS[i];
    let f = (v - t0) / (t1 - t0);
    std::array::from_fn(|k| (c0[k] + f * (c1[k] - c0[k])).round() as u8)
}

pub fn grid_image(grid: &Grid) -> RgbImage {
    RgbImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        Rgb(colormap(grid.get(y as usize, x as usize)))
    })
}

pub fn mask_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    })
}

pub fn save_grid_png(grid: &Grid, path: &Path) -> image::ImageResult<()> {
    grid_image(grid).save_with_format(path, image::ImageFormat::Png)
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> image::ImageResult<()> {
    mask_image(mask).save_with_format(path, image::ImageFormat::Png)
}
