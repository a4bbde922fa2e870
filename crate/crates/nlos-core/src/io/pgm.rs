//! 16-bit binary portable graymaps (P5, maxval 65535).
//!
//! Intensity images map [0, 1] linearly onto the sample range; depth images
//! are scaled by an explicit z-range, which is embedded in a comment line so
//! the mapping inverts losslessly. Quantization uses round-half-even.
//! Samples are written most-significant byte first, per the format.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImageKind {
    /// Values already in [0, 1].
    Intensity,
    /// Values in meters, mapped linearly from [z_min, z_max].
    Depth { z_min_m: f64, z_max_m: f64 },
}

const MAXVAL: f64 = 65535.0;

pub fn write_image(path: &Path, img: &Array2<f64>, kind: ImageKind) -> Result<()> {
    let (nx, ny) = img.dim();
    let mut bytes = Vec::with_capacity(64 + nx * ny * 2);
    bytes.extend_from_slice(b"P5\n");
    match kind {
        ImageKind::Intensity => bytes.extend_from_slice(b"# nlos intensity v1\n"),
        ImageKind::Depth { z_min_m, z_max_m } => {
            if !(z_max_m > z_min_m) {
                return Err(Error::InvalidParameter(format!(
                    "depth image needs z_max > z_min, got [{z_min_m}, {z_max_m}]"
                )));
            }
            bytes.extend_from_slice(b"# nlos depth v1\n");
            bytes.extend_from_slice(format!("# zrange {z_min_m} {z_max_m}\n").as_bytes());
        }
    }
    bytes.extend_from_slice(format!("{nx} {ny}\n65535\n").as_bytes());
    // Raster: ny rows of nx samples, iy = 0 first.
    for iy in 0..ny {
        for ix in 0..nx {
            let v = img[[ix, iy]];
            let unit = match kind {
                ImageKind::Intensity => v,
                ImageKind::Depth { z_min_m, z_max_m } => (v - z_min_m) / (z_max_m - z_min_m),
            };
            let q = (unit.clamp(0.0, 1.0) * MAXVAL).round_ties_even() as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
    }
    atomic_write(path, &bytes)
}

/// Reads a P5 graymap written by `write_image`. Returns the image with
/// values in [0, 1] plus the embedded z-range when present (depth images).
pub fn read_image(path: &Path) -> Result<(Array2<f64>, Option<(f64, f64)>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut zrange = None;

    let mut token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                let start = *pos;
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                let comment = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
                if let Some(rest) = comment.strip_prefix("# zrange ") {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() == 2 {
                        let lo = parts[0].parse::<f64>();
                        let hi = parts[1].parse::<f64>();
                        if let (Ok(lo), Ok(hi)) = (lo, hi) {
                            zrange = Some((lo, hi));
                        }
                    }
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
            return Err(Error::TruncatedFile {
                expected: *pos as u64 + 1,
                actual: bytes.len() as u64,
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::BadMagic);
    }
    let nx: usize = token(&mut pos)?
        .parse()
        .map_err(|_| Error::InvalidParameter("bad width field".into()))?;
    let ny: usize = token(&mut pos)?
        .parse()
        .map_err(|_| Error::InvalidParameter("bad height field".into()))?;
    let maxval: u32 = token(&mut pos)?
        .parse()
        .map_err(|_| Error::InvalidParameter("bad maxval field".into()))?;
    if maxval != 65535 {
        return Err(Error::VersionUnsupported { version: maxval });
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = pos as u64 + (nx * ny * 2) as u64;
    if (bytes.len() as u64) != expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut img = Array2::zeros((nx, ny));
    let mut o = pos;
    for iy in 0..ny {
        for ix in 0..nx {
            let q = u16::from_be_bytes([bytes[o], bytes[o + 1]]);
            img[[ix, iy]] = q as f64 / MAXVAL;
            o += 2;
        }
    }
    Ok((img, zrange))
}

/// Maps a [0, 1] image back to meters using a z-range.
pub fn denormalize_depth(img: &Array2<f64>, z_min_m: f64, z_max_m: f64) -> Array2<f64> {
    img.mapv(|v| z_min_m + v * (z_max_m - z_min_m))
}
