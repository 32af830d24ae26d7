//! Raw little-endian float32 maps; dimensions travel in the manifest, not
//! the file.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn write_f32_map(path: &Path, map: &Grid<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(map.len() * 4);
    for &v in map.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_f32_map(path: &Path, width: usize, height: usize) -> Result<Grid<f64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let expected = width * height * 4;
    if buf.len() != expected {
        return Err(Error::Format(format!(
            "raw map {} is {} bytes, manifest dimensions {width}x{height} require {expected}",
            path.display(),
            buf.len()
        )));
    }
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::from_vec(width, height, data)
}
