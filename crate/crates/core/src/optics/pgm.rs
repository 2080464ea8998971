//! 16-bit binary PGM images with a JSON sidecar carrying the intensity
//! scale.
//!
//! Samples are big-endian with maxval 65535. Intensities are stored as
//! `round(value · scale)` where `scale = 65535 / max(image)`; the sidecar
//! `<name>.json` records `{"scale", "pitch", "width", "height"}` and
//! readers divide by `scale` to recover intensities.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ImageGrid;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAXVAL: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub scale: f64,
    pub pitch: f64,
    pub width: usize,
    pub height: usize,
}

/// Sidecar path for an image: the same path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Quantizes `img` to 16-bit samples and returns the PGM bytes and the
/// sidecar describing the scale.
pub fn encode(img: &ImageGrid) -> (Vec<u8>, Sidecar) {
    let max = img.max();
    let scale = if max > 0.0 {
        f64::from(MAXVAL) / max
    } else {
        1.0
    };
    let header = format!("P5\n{} {}\n{}\n", img.width(), img.height(), MAXVAL);
    let mut bytes = Vec::with_capacity(header.len() + 2 * img.values().len());
    bytes.extend_from_slice(header.as_bytes());
    for &v in img.values() {
        let q = (v * scale).round().clamp(0.0, f64::from(MAXVAL)) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    let sidecar = Sidecar {
        scale,
        pitch: img.pitch(),
        width: img.width(),
        height: img.height(),
    };
    (bytes, sidecar)
}

/// Parses a binary PGM into raw sample counts.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    let width = parse_number(next_token(bytes, &mut pos)?)?;
    let height = parse_number(next_token(bytes, &mut pos)?)?;
    let maxval = parse_number(next_token(bytes, &mut pos)?)?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "invalid dimensions {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > usize::from(MAXVAL) {
        return Err(Error::Format(format!("invalid maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated header".into()));
    }
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let need = width * height * sample_bytes;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Format(format!(
            "raster holds {} bytes, expected {need}",
            raster.len()
        )));
    }
    let values = if sample_bytes == 1 {
        raster[..need].iter().map(|&b| f64::from(b)).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    Ok((width, height, values))
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8]) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "bad header field {:?}",
                String::from_utf8_lossy(token)
            ))
        })
}

/// Writes `<path>` and its sidecar, each atomically.
pub fn write(path: &Path, img: &ImageGrid) -> Result<()> {
    let (bytes, sidecar) = encode(img);
    write_atomic(path, &bytes)?;
    write_atomic(
        &sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?.as_bytes(),
    )
}

/// Reads an image and undoes the sidecar scale. Without a sidecar the raw
/// counts are returned with unit pitch.
pub fn read(path: &Path) -> Result<ImageGrid> {
    let (width, height, counts) = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        let s: Sidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if (s.width, s.height) != (width, height) {
            return Err(Error::Format(format!(
                "sidecar says {}x{} but image is {width}x{height}",
                s.width, s.height
            )));
        }
        if !(s.scale > 0.0) {
            return Err(Error::Format(format!(
                "sidecar scale must be positive, got {}",
                s.scale
            )));
        }
        s
    } else {
        Sidecar {
            scale: 1.0,
            pitch: 1.0,
            width,
            height,
        }
    };
    let values = counts.into_iter().map(|c| c / sidecar.scale).collect();
    ImageGrid::with_pitch(width, height, values, sidecar.pitch)
}
