//! Wire format spoken with external classifier workers over stdin/stdout.
//!
//! ```text
//! request  = "SMCD" | u32le width | u32le height | u32le bands | f32le samples (band-major)
//! response = "SMCR" | f32le score
//! ```
//!
//! One response per request, in order.

use std::io::{self, Read, Write};

pub const REQUEST_MAGIC: &[u8; 4] = b"SMCD";
pub const RESPONSE_MAGIC: &[u8; 4] = b"SMCR";
pub const RESPONSE_LEN: usize = 8;

/// Decoded request frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub width: u32,
    pub height: u32,
    pub bands: u32,
    pub samples: Vec<f32>,
}

pub fn encode_request(width: u32, height: u32, bands: u32, samples: &[f32]) -> Vec<u8> {
    assert_eq!(samples.len(), (width * height * bands) as usize);
    let mut out = Vec::with_capacity(16 + samples.len() * 4);
    out.extend_from_slice(REQUEST_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&bands.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Reads one request. Returns `Ok(None)` on a clean EOF before the first byte.
pub fn read_request<R: Read>(reader: &mut R) -> io::Result<Option<Request>> {
    let mut header = [0u8; 16];
    match reader.read(&mut header[..1])? {
        0 => return Ok(None),
        _ => reader.read_exact(&mut header[1..])?,
    }
    if &header[..4] != REQUEST_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad request magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let (width, height, bands) = (word(4), word(8), word(12));
    let n = width as usize * height as usize * bands as usize;
    let mut payload = vec![0u8; n * 4];
    reader.read_exact(&mut payload)?;
    let samples = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Some(Request {
        width,
        height,
        bands,
        samples,
    }))
}

pub fn encode_response(score: f32) -> [u8; RESPONSE_LEN] {
    let mut out = [0u8; RESPONSE_LEN];
    out[..4].copy_from_slice(RESPONSE_MAGIC);
    out[4..].copy_from_slice(&score.to_le_bytes());
    out
}

pub fn write_response<W: Write>(writer: &mut W, score: f32) -> io::Result<()> {
    writer.write_all(&encode_response(score))?;
    writer.flush()
}

/// Decodes a response frame, checking only the magic. Range checks belong to
/// the caller.
pub fn decode_response(frame: &[u8; RESPONSE_LEN]) -> Result<f32, String> {
    if &frame[..4] != RESPONSE_MAGIC {
        return Err(format!("bad response magic {:02x?}", &frame[..4]));
    }
    Ok(f32::from_le_bytes(frame[4..].try_into().unwrap()))
}
