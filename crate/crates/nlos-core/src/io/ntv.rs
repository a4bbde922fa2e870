//! NTV: the binary transient-volume container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NTV1"
//! 4       4     u32 version = 1
//! 8       4     u32 nx
//! 12      4     u32 ny
//! 16      4     u32 nt
//! 20      8     f64 bin_width_s
//! 28      8     f64 extent_m
//! 36      24    f64 origin[3]
//! 60      1     u8 kind (0 clean, 1 counts, 2 complex)
//! 61      3     zero padding
//! 64      ...   payload
//! ```
//!
//! The payload holds f32 samples in row-major (iy, ix, it) order; complex
//! volumes store interleaved (re, im) pairs. The header is exactly 64 bytes
//! and the payload length must match the dimensions exactly.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::ApertureGrid;
use crate::transient::{TransientVolume, VolumeData, VolumeKind};

use super::atomic_write;

pub const NTV_MAGIC: [u8; 4] = *b"NTV1";
pub const NTV_VERSION: u32 = 1;
pub const NTV_HEADER_LEN: usize = 64;

fn kind_to_byte(kind: VolumeKind) -> u8 {
    match kind {
        VolumeKind::CleanReal => 0,
        VolumeKind::NoisyCounts => 1,
        VolumeKind::ComplexPhasor => 2,
    }
}

fn kind_from_byte(b: u8) -> Result<VolumeKind> {
    match b {
        0 => Ok(VolumeKind::CleanReal),
        1 => Ok(VolumeKind::NoisyCounts),
        2 => Ok(VolumeKind::ComplexPhasor),
        other => Err(Error::InvalidParameter(format!(
            "unknown volume kind byte {other}"
        ))),
    }
}

pub fn write_ntv(path: &Path, tv: &TransientVolume) -> Result<()> {
    let (nx, ny, nt) = tv.data.dim();
    let elem = match tv.kind {
        VolumeKind::ComplexPhasor => 8,
        _ => 4,
    };
    let mut bytes = Vec::with_capacity(NTV_HEADER_LEN + nx * ny * nt * elem);
    bytes.extend_from_slice(&NTV_MAGIC);
    bytes.extend_from_slice(&NTV_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(nx as u32).to_le_bytes());
    bytes.extend_from_slice(&(ny as u32).to_le_bytes());
    bytes.extend_from_slice(&(nt as u32).to_le_bytes());
    bytes.extend_from_slice(&tv.bin_width_s.to_le_bytes());
    bytes.extend_from_slice(&tv.aperture.extent_m().to_le_bytes());
    for v in tv.aperture.origin_m() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.push(kind_to_byte(tv.kind));
    bytes.extend_from_slice(&[0u8; 3]);
    debug_assert_eq!(bytes.len(), NTV_HEADER_LEN);

    match &tv.data {
        VolumeData::Real(a) => {
            for iy in 0..ny {
                for ix in 0..nx {
                    for it in 0..nt {
                        bytes.extend_from_slice(&(a[[ix, iy, it]] as f32).to_le_bytes());
                    }
                }
            }
        }
        VolumeData::Complex(a) => {
            for iy in 0..ny {
                for ix in 0..nx {
                    for it in 0..nt {
                        let v = a[[ix, iy, it]];
                        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
                        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
                    }
                }
            }
        }
    }
    atomic_write(path, &bytes)
}

pub fn read_ntv(path: &Path) -> Result<TransientVolume> {
    let bytes = fs::read(path)?;
    if bytes.len() < NTV_HEADER_LEN {
        if bytes.len() < 4 || bytes[0..4] != NTV_MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::TruncatedFile {
            expected: NTV_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0..4] != NTV_MAGIC {
        return Err(Error::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != NTV_VERSION {
        return Err(Error::VersionUnsupported { version });
    }
    let nx = u32_at(8) as usize;
    let ny = u32_at(12) as usize;
    let nt = u32_at(16) as usize;
    let bin_width_s = f64_at(20);
    let extent_m = f64_at(28);
    let origin = [f64_at(36), f64_at(44), f64_at(52)];
    let kind = kind_from_byte(bytes[60])?;

    let elem = match kind {
        VolumeKind::ComplexPhasor => 8,
        _ => 4,
    };
    let expected = NTV_HEADER_LEN as u64 + (nx * ny * nt * elem) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len() as u64,
        });
    }

    let grid = ApertureGrid::new(nx, ny, extent_m, origin)?;
    let payload = &bytes[NTV_HEADER_LEN..];
    let f32_at = |o: usize| f32::from_le_bytes(payload[o..o + 4].try_into().unwrap()) as f64;
    let data = match kind {
        VolumeKind::ComplexPhasor => {
            let mut a = Array3::<Complex64>::default((nx, ny, nt));
            let mut o = 0;
            for iy in 0..ny {
                for ix in 0..nx {
                    for it in 0..nt {
                        a[[ix, iy, it]] = Complex64::new(f32_at(o), f32_at(o + 4));
                        o += 8;
                    }
                }
            }
            VolumeData::Complex(a)
        }
        _ => {
            let mut a = Array3::<f64>::zeros((nx, ny, nt));
            let mut o = 0;
            for iy in 0..ny {
                for ix in 0..nx {
                    for it in 0..nt {
                        a[[ix, iy, it]] = f32_at(o);
                        o += 4;
                    }
                }
            }
            VolumeData::Real(a)
        }
    };
    TransientVolume::new(data, bin_width_s, grid, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn f32_volume(nx: usize, ny: usize, nt: usize) -> TransientVolume {
        // Values chosen to be exactly representable in f32.
        let grid = ApertureGrid::centered(nx, ny, 2.0).unwrap();
        let data = Array3::from_shape_fn((nx, ny, nt), |(i, j, k)| {
            ((i * 31 + j * 7 + k) % 97) as f64 * 0.25
        });
        TransientVolume::new(VolumeData::Real(data), 33e-12, grid, VolumeKind::CleanReal).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vol.ntv");
        let tv = f32_volume(4, 4, 8);
        write_ntv(&path, &tv).unwrap();
        let back = read_ntv(&path).unwrap();
        assert_eq!(tv.as_real().unwrap(), back.as_real().unwrap());
        assert_eq!(tv.bin_width_s, back.bin_width_s);
        assert_eq!(tv.aperture, back.aperture);
        assert_eq!(tv.kind, back.kind);

        // Write-read-write: the file bytes are stable too.
        let path2 = dir.path().join("vol2.ntv");
        write_ntv(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn complex_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phasor.ntv");
        let grid = ApertureGrid::centered(3, 2, 1.0).unwrap();
        let data = Array3::from_shape_fn((3, 2, 8), |(i, j, k)| {
            Complex64::new((i + j) as f64 * 0.5, k as f64 * -0.125)
        });
        let tv = TransientVolume::new(
            VolumeData::Complex(data),
            16e-12,
            grid,
            VolumeKind::ComplexPhasor,
        )
        .unwrap();
        write_ntv(&path, &tv).unwrap();
        let back = read_ntv(&path).unwrap();
        assert_eq!(tv.as_complex().unwrap(), back.as_complex().unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ntv");
        let tv = f32_volume(2, 2, 8);
        write_ntv(&path, &tv).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_ntv(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.ntv");
        let tv = f32_volume(2, 2, 8);
        write_ntv(&path, &tv).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let full = bytes.len() as u64;
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        match read_ntv(&path) {
            Err(Error::TruncatedFile { expected, actual }) => {
                assert_eq!(expected, full);
                assert_eq!(actual, full - 1);
            }
            other => panic!("expected TruncatedFile, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v9.ntv");
        let tv = f32_volume(2, 2, 8);
        write_ntv(&path, &tv).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_ntv(&path),
            Err(Error::VersionUnsupported { version: 9 })
        ));
    }

    #[test]
    fn header_is_exactly_64_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.ntv");
        let tv = f32_volume(2, 2, 8);
        write_ntv(&path, &tv).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), NTV_HEADER_LEN + 2 * 2 * 8 * 4);
    }
}
