//! Synthetic scenes with known cloud masks.
//!
//! Background: rectangular land parcels of varying reflectance, all with
//! nonpositive-to-small CTM. Clouds raise blue well above green. Distractors
//! are bright squares raising blue and green together, which keeps their CTM
//! low. All randomness comes from a ChaCha stream seeded by the preset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Band, BandName, BinaryMask, MultibandRaster};

pub const MIN_SCENE_EDGE: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene must be at least {MIN_SCENE_EDGE}x{MIN_SCENE_EDGE}, got {0}x{1}")]
    TooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Dense,
    LargeArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePreset {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub distractors: usize,
}

impl ScenePreset {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < MIN_SCENE_EDGE || self.height < MIN_SCENE_EDGE {
            return Err(SynthError::TooSmall(self.width, self.height));
        }
        Ok(())
    }
}

/// Rotated ellipse; `contains` is the footprint test used for ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cy: f64,
    pub cx: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

impl Ellipse {
    /// Squared normalized radius; below 1 inside the ellipse.
    pub fn radius2(&self, row: f64, col: f64) -> f64 {
        let (dy, dx) = (row - self.cy, col - self.cx);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.radius2(row as f64 + 0.5, col as f64 + 0.5) < 1.0
    }

    pub fn pixel_count(&self, width: usize, height: usize) -> usize {
        let (r0, r1, c0, c1) = self.bounds(width, height);
        (r0..r1)
            .flat_map(|r| (c0..c1).map(move |c| (r, c)))
            .filter(|&(r, c)| self.contains(r, c))
            .count()
    }

    fn bounds(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let reach = self.semi_major + 1.0;
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        (
            clip(self.cy - reach, height),
            clip(self.cy + reach + 1.0, height),
            clip(self.cx - reach, width),
            clip(self.cx + reach + 1.0, width),
        )
    }
}

/// Edge of a thin cloud deck: a straight line with a sinusoidal wobble.
/// Cloud lies on the negative side; thickness falls off as a tanh of the
/// signed distance over `softness` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudFront {
    /// Unit normal pointing from cloud to clear sky, as (row, col).
    pub normal: (f64, f64),
    pub offset: f64,
    pub wobble_amplitude: f64,
    pub wobble_wavelength: f64,
    pub wobble_phase: f64,
    pub softness: f64,
}

impl CloudFront {
    fn sample(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Self {
        let side = rng.gen_range(0..4) as f64 * std::f64::consts::FRAC_PI_2;
        let theta = side + rng.gen_range(-0.3..0.3);
        let normal = (theta.sin(), theta.cos());
        let edge = width.min(height) as f64;
        let mut front = Self {
            normal,
            offset: 0.0,
            wobble_amplitude: edge * rng.gen_range(0.02..0.04),
            wobble_wavelength: edge * rng.gen_range(0.3..0.5),
            wobble_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            softness: edge * 0.045,
        };
        // place the front so the target fraction of a coarse lattice is cloud
        let coverage = rng.gen_range(0.65..0.75);
        let mut proj: Vec<f64> = (0..height)
            .step_by(8)
            .flat_map(|r| (0..width).step_by(8).map(move |c| (r as f64, c as f64)))
            .map(|(r, c)| front.signed_distance(r, c))
            .collect();
        proj.sort_by(f64::total_cmp);
        front.offset = proj[((proj.len() as f64 * coverage) as usize).min(proj.len() - 1)];
        front
    }

    /// Pixels from the front, positive on the clear side.
    pub fn signed_distance(&self, row: f64, col: f64) -> f64 {
        let (nr, nc) = self.normal;
        let along = -row * nc + col * nr;
        let wobble =
            self.wobble_amplitude * (std::f64::consts::TAU * along / self.wobble_wavelength + self.wobble_phase).sin();
        row * nr + col * nc - self.offset + wobble
    }

    /// Cloud thickness in `[0, 1]`; 0.5 on the front.
    pub fn thickness(&self, row: f64, col: f64) -> f64 {
        0.5 * (1.0 - (self.signed_distance(row, col) / self.softness).tanh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl Square {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.size && col >= self.col && col < self.col + self.size
    }
}

/// Everything the generator decided, for the `scene.json` manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub preset: ScenePreset,
    pub blobs: Vec<Ellipse>,
    pub field: Option<CloudFront>,
    pub distractor_squares: Vec<Square>,
    pub noise_amplitude: u16,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub raster: MultibandRaster,
    pub truth: BinaryMask,
    pub layout: SceneLayout,
}

/// Per-band radiance offsets, in band order blue, green, red, nir.
type Spectrum = [f64; 4];

const CLOUD_THICK: Spectrum = [26000.0, 18000.0, 17000.0, 16000.0];
const CLOUD_THIN: Spectrum = [5500.0, 4000.0, 3800.0, 3500.0];
const DISTRACTOR: Spectrum = [20000.0, 36000.0, 36000.0, 34000.0];
const NOISE_AMPLITUDE: u16 = 30;

/// Texture inside thick clouds: a few oriented sinusoids, relative amplitude.
const TEXTURE_COMPONENTS: usize = 6;
const TEXTURE_AMPLITUDE: f64 = 0.2;

fn background(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<Spectrum> {
    let mut bg = vec![[0.0; 4]; width * height];
    let mut row = 0;
    while row < height {
        let rh = rng.gen_range(120..=260).min(height - row);
        let mut col = 0;
        while col < width {
            let cw = rng.gen_range(120..=260).min(width - col);
            let parcel: Spectrum = [
                rng.gen_range(900.0..1500.0),
                rng.gen_range(2400.0..3000.0),
                rng.gen_range(2000.0..2800.0),
                rng.gen_range(3000.0..5000.0),
            ];
            for r in row..row + rh {
                for c in col..col + cw {
                    bg[r * width + c] = parcel;
                }
            }
            col += cw;
        }
        row += rh;
    }
    bg
}

fn place_blobs(preset: &ScenePreset, rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    let (w, h) = (preset.width as f64, preset.height as f64);
    let target = ((w * h) / (1024.0 * 1024.0) * 6.0).round().max(1.0) as usize;
    let mut blobs: Vec<Ellipse> = Vec::new();
    let max_major = (w.min(h) * 0.19).max(40.0);
    for _ in 0..target * 200 {
        if blobs.len() == target {
            break;
        }
        let semi_major = rng.gen_range(max_major * 0.75..max_major);
        let semi_minor = semi_major * rng.gen_range(0.65..1.0);
        let margin = semi_major + 8.0;
        if 2.0 * margin >= w || 2.0 * margin >= h {
            continue;
        }
        let e = Ellipse {
            cy: rng.gen_range(margin..h - margin),
            cx: rng.gen_range(margin..w - margin),
            semi_major,
            semi_minor,
            angle: rng.gen_range(0.0..std::f64::consts::PI),
        };
        let clear = blobs.iter().all(|b| {
            let d = ((b.cy - e.cy).powi(2) + (b.cx - e.cx).powi(2)).sqrt();
            d > b.semi_major + e.semi_major + 24.0
        });
        if clear {
            blobs.push(e);
        }
    }
    blobs
}

/// Squares kept well away from clouds so distance-weighted expansion cannot
/// reach them.
fn place_distractors(preset: &ScenePreset, keep_out: impl Fn(f64, f64) -> f64, rng: &mut ChaCha8Rng) -> Vec<Square> {
    let mut squares: Vec<Square> = Vec::new();
    for _ in 0..preset.distractors * 500 {
        if squares.len() == preset.distractors {
            break;
        }
        let size: usize = rng.gen_range(40..=64);
        if size + 2 >= preset.width || size + 2 >= preset.height {
            break;
        }
        let row = rng.gen_range(1..preset.height - size - 1);
        let col = rng.gen_range(1..preset.width - size - 1);
        let s = Square { row, col, size };
        let corners = [
            (row, col),
            (row + size, col),
            (row, col + size),
            (row + size, col + size),
            (row + size / 2, col + size / 2),
        ];
        let far = corners.iter().all(|&(r, c)| keep_out(r as f64, c as f64) > 0.0);
        let apart = squares
            .iter()
            .all(|o| o.row.abs_diff(row) > o.size.max(size) + 20 || o.col.abs_diff(col) > o.size.max(size) + 20);
        if far && apart {
            squares.push(s);
        }
    }
    squares
}

fn texture(rng: &mut ChaCha8Rng) -> Vec<(f64, f64, f64)> {
    (0..TEXTURE_COMPONENTS)
        .map(|_| {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let wavelength: f64 = rng.gen_range(10.0..20.0);
            let k = 2.0 * std::f64::consts::PI / wavelength;
            (
                k * theta.cos(),
                k * theta.sin(),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect()
}

fn quantize(v: f64) -> u16 {
    v.round().clamp(0.0, 65535.0) as u16
}

pub fn generate_scene(preset: &ScenePreset) -> Result<Scene, SynthError> {
    preset.validate()?;
    let (w, h) = (preset.width, preset.height);
    let mut rng = ChaCha8Rng::seed_from_u64(preset.seed);
    let mut pixels = background(w, h, &mut rng);
    let mut truth = BinaryMask::empty(w, h);

    let mut blobs = Vec::new();
    let mut field = None;
    match preset.kind {
        SceneKind::Dense => {
            blobs = place_blobs(preset, &mut rng);
            let waves = texture(&mut rng);
            for blob in &blobs {
                let (r0, r1, c0, c1) = blob.bounds(w, h);
                for r in r0..r1 {
                    for c in c0..c1 {
                        if !blob.contains(r, c) {
                            continue;
                        }
                        let rho2 = blob.radius2(r as f64 + 0.5, c as f64 + 0.5);
                        let tex: f64 = waves
                            .iter()
                            .map(|&(ky, kx, ph)| (ky * r as f64 + kx * c as f64 + ph).sin())
                            .sum::<f64>()
                            / (TEXTURE_COMPONENTS as f64).sqrt();
                        let s = (0.85 + 0.15 * (1.0 - rho2)) * (1.0 + TEXTURE_AMPLITUDE * tex);
                        let px = &mut pixels[r * w + c];
                        for (p, add) in px.iter_mut().zip(CLOUD_THICK) {
                            *p += add * s;
                        }
                        truth.set(r, c, true);
                    }
                }
            }
        }
        SceneKind::LargeArea => {
            let front = CloudFront::sample(w, h, &mut rng);
            for r in 0..h {
                for c in 0..w {
                    let t = front.thickness(r as f64 + 0.5, c as f64 + 0.5);
                    let px = &mut pixels[r * w + c];
                    for (p, add) in px.iter_mut().zip(CLOUD_THIN) {
                        *p += add * t;
                    }
                    if t > 0.5 {
                        truth.set(r, c, true);
                    }
                }
            }
            field = Some(front);
        }
    }

    let keep_out = |r: f64, c: f64| -> f64 {
        let blob_gap = blobs
            .iter()
            .map(|b| ((b.cy - r).powi(2) + (b.cx - c).powi(2)).sqrt() - b.semi_major)
            .fold(f64::INFINITY, f64::min)
            - 130.0;
        let field_gap = field.map_or(f64::INFINITY, |f: CloudFront| {
            f.signed_distance(r, c) - 2.5 * f.softness - 20.0
        });
        blob_gap.min(field_gap)
    };
    let distractor_squares = place_distractors(preset, keep_out, &mut rng);
    for sq in &distractor_squares {
        for r in sq.row..sq.row + sq.size {
            for c in sq.col..sq.col + sq.size {
                for (p, add) in pixels[r * w + c].iter_mut().zip(DISTRACTOR) {
                    *p += add;
                }
            }
        }
    }

    let amp = NOISE_AMPLITUDE as f64;
    let mut bands: Vec<Vec<u16>> = (0..4).map(|_| Vec::with_capacity(w * h)).collect();
    for px in &pixels {
        for (band, &v) in bands.iter_mut().zip(px) {
            band.push(quantize(v + rng.gen_range(-amp..=amp)));
        }
    }
    let raster = MultibandRaster::new(
        w,
        h,
        BandName::ALL
            .into_iter()
            .zip(bands)
            .map(|(name, data)| Band { name, data })
            .collect(),
    )
    .expect("generator respects raster invariants");

    Ok(Scene {
        raster,
        truth,
        layout: SceneLayout {
            preset: *preset,
            blobs,
            field,
            distractor_squares,
            noise_amplitude: NOISE_AMPLITUDE,
        },
    })
}
