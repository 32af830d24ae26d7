//! File formats: PGM (P2/P5, 8/16-bit), grayscale PNG (8/16-bit), raw
//! little-endian float32 maps with a JSON manifest, and PLY point clouds
//! (ascii and binary little-endian). All roundtrips are lossless at native
//! bit depth.

mod manifest;
mod pgm;
mod ply;
mod pngio;
mod rawmap;

pub use manifest::{FrameEntry, FramesManifest, GroundTruthEntry, SyncManifest};
pub use pgm::{read_pgm, write_pgm, PgmEncoding};
pub use ply::{read_ply, write_ply, PlyFormat, PlyOptions};
pub use pngio::{read_png_gray, write_png_gray};
pub use rawmap::{read_f32_map, write_f32_map};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Scale a unit-interval intensity map to integer levels of `bits` depth.
pub(crate) fn to_levels(map: &Grid<f64>, bits: u8) -> Grid<u16> {
    let levels = ((1u32 << bits) - 1) as f64;
    map.map(|v| (v.clamp(0.0, 1.0) * levels).round() as u16)
}

/// Inverse of [`to_levels`].
pub(crate) fn from_levels(map: &Grid<u16>, bits: u8) -> Grid<f64> {
    let levels = ((1u32 << bits) - 1) as f64;
    map.map(|v| v as f64 / levels)
}

pub(crate) fn check_bits(bits: u8) -> Result<()> {
    if bits != 8 && bits != 16 {
        return Err(Error::InvalidParam(format!(
            "unsupported image bit depth {bits}; expected 8 or 16"
        )));
    }
    Ok(())
}
