//! On-disk formats.
//!
//! * Multi-band raster: a directory holding `meta.json`
//!   (`{"width","height","bands":[{"name","file"}]}`) and one binary PGM (P5,
//!   maxval 65535, big-endian samples) per band.
//! * Grid: raw little-endian `f32` payload, row-major, plus a JSON sidecar
//!   `{"width","height","role"}` next to it with the extension `json`.
//! * Mask: 8-bit binary PGM, 0 = clear, 255 = cloud.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Band, BandName, BinaryMask, Grid, MultibandRaster, RasterError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed PGM: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },
    #[error("{path}: expected maxval {expected}, found {found}")]
    Maxval { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: payload holds {actual} bytes, expected {expected}")]
    PayloadLength {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: band is {actual_w}x{actual_h}, metadata declares {width}x{height}")]
    BandDimensions {
        path: PathBuf,
        width: usize,
        height: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("{path}: malformed mask sample {value} at index {index} (expected 0 or 255)")]
    MalformedMask { path: PathBuf, index: usize, value: u8 },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: RasterError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path) -> impl FnOnce(RasterError) -> IoError + '_ {
    move |source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    }
}

/// Decoded binary PGM: dimensions, maxval and samples widened to `u16`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

/// Parses a P5 image. Comments (`#` to end of line) are accepted anywhere in
/// the header. The payload must hold exactly `width * height` samples.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Pgm, IoError> {
    let malformed = |reason: &str| IoError::MalformedPgm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header field out of range"))?;
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval must be in 1..=65535"));
    }
    let (width, height) = (width as usize, height as usize);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let payload = &bytes[pos..];
    let expected = width * height * bytes_per_sample;
    if payload.len() != expected {
        return Err(IoError::PayloadLength {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    let samples = if bytes_per_sample == 2 {
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload.iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval,
        samples,
    })
}

/// Encodes a P5 image. Samples are written as one byte when `maxval < 256`,
/// otherwise as big-endian pairs.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.reserve(samples.len() * 2);
        for &s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

fn read_pgm(path: &Path) -> Result<Pgm, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_pgm(&bytes, path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RasterMeta {
    pub width: usize,
    pub height: usize,
    pub bands: Vec<BandEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandEntry {
    pub name: String,
    pub file: String,
}

pub const META_FILE: &str = "meta.json";

/// Loads a multi-band raster container.
pub fn load_multiband(dir: &Path) -> Result<MultibandRaster, IoError> {
    let meta_path = dir.join(META_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(io_err(&meta_path))?;
    let meta: RasterMeta = serde_json::from_slice(&meta_bytes).map_err(|source| IoError::Json {
        path: meta_path.clone(),
        source,
    })?;
    let mut bands = Vec::with_capacity(meta.bands.len());
    for entry in &meta.bands {
        let path = dir.join(&entry.file);
        let name: BandName = entry.name.parse().map_err(invalid(&path))?;
        let pgm = read_pgm(&path)?;
        if pgm.maxval != 65535 {
            return Err(IoError::Maxval {
                path,
                expected: 65535,
                found: pgm.maxval,
            });
        }
        if pgm.width != meta.width || pgm.height != meta.height {
            return Err(IoError::BandDimensions {
                path,
                width: meta.width,
                height: meta.height,
                actual_w: pgm.width,
                actual_h: pgm.height,
            });
        }
        bands.push(Band {
            name,
            data: pgm.samples,
        });
    }
    MultibandRaster::new(meta.width, meta.height, bands).map_err(invalid(&meta_path))
}

/// Writes a raster container, one `<band>.pgm` per band.
pub fn save_multiband(raster: &MultibandRaster, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for band in raster.bands() {
        let file = format!("{}.pgm", band.name);
        let bytes = encode_pgm(raster.width(), raster.height(), 65535, &band.data);
        write_bytes(&dir.join(&file), &bytes)?;
        entries.push(BandEntry {
            name: band.name.to_string(),
            file,
        });
    }
    let meta = RasterMeta {
        width: raster.width(),
        height: raster.height(),
        bands: entries,
    };
    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_vec_pretty(&meta).map_err(|source| IoError::Json {
        path: meta_path.clone(),
        source,
    })?;
    write_bytes(&meta_path, &json)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSidecar {
    pub width: usize,
    pub height: usize,
    pub role: String,
}

pub fn grid_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_grid(grid: &Grid, role: &str, path: &Path) -> Result<(), IoError> {
    let mut payload = Vec::with_capacity(grid.len() * 4);
    for v in grid.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &payload)?;
    let sidecar = GridSidecar {
        width: grid.width(),
        height: grid.height(),
        role: role.to_string(),
    };
    let side_path = grid_sidecar_path(path);
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|source| IoError::Json {
        path: side_path.clone(),
        source,
    })?;
    write_bytes(&side_path, &json)
}

pub fn load_grid_with_role(path: &Path) -> Result<(Grid, String), IoError> {
    let side_path = grid_sidecar_path(path);
    let side_bytes = fs::read(&side_path).map_err(io_err(&side_path))?;
    let sidecar: GridSidecar = serde_json::from_slice(&side_bytes).map_err(|source| IoError::Json {
        path: side_path.clone(),
        source,
    })?;
    let payload = fs::read(path).map_err(io_err(path))?;
    let expected = sidecar.width * sidecar.height * 4;
    if payload.len() != expected {
        return Err(IoError::PayloadLength {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let grid = Grid::new(sidecar.width, sidecar.height, data).map_err(invalid(path))?;
    Ok((grid, sidecar.role))
}

pub fn load_grid(path: &Path) -> Result<Grid, IoError> {
    load_grid_with_role(path).map(|(g, _)| g)
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let samples: Vec<u16> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_pgm(mask.width(), mask.height(), 255, &samples)
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_mask(mask))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask, IoError> {
    let pgm = read_pgm(path)?;
    if pgm.maxval != 255 {
        return Err(IoError::Maxval {
            path: path.to_path_buf(),
            expected: 255,
            found: pgm.maxval,
        });
    }
    let mut data = Vec::with_capacity(pgm.samples.len());
    for (index, &s) in pgm.samples.iter().enumerate() {
        match s {
            0 => data.push(false),
            255 => data.push(true),
            other => {
                return Err(IoError::MalformedMask {
                    path: path.to_path_buf(),
                    index,
                    value: other as u8,
                })
            }
        }
    }
    BinaryMask::new(pgm.width, pgm.height, data).map_err(invalid(path))
}
