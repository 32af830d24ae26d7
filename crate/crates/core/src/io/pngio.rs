//! 8/16-bit grayscale PNG, for pattern export and external tooling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

use super::{check_bits, from_levels, to_levels};

pub fn write_png_gray(path: &Path, map: &Grid<f64>, bits: u8) -> Result<()> {
    check_bits(bits)?;
    let file = std::fs::File::create(path)?;
    let w = std::io::BufWriter::new(file);
    let mut encoder = png::Encoder::new(w, map.width() as u32, map.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(if bits == 8 {
        png::BitDepth::Eight
    } else {
        png::BitDepth::Sixteen
    });
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let levels = to_levels(map, bits);
    let bytes: Vec<u8> = if bits == 8 {
        levels.as_slice().iter().map(|&v| v as u8).collect()
    } else {
        levels
            .as_slice()
            .iter()
            .flat_map(|&v| v.to_be_bytes())
            .collect()
    };
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    Ok(())
}

pub fn read_png_gray(path: &Path) -> Result<(Grid<f64>, u8)> {
    let file = std::fs::File::open(path)?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png: {e}")))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Format(format!(
            "expected grayscale PNG, got {:?}",
            info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let (levels, bits): (Vec<u16>, u8) = match info.bit_depth {
        png::BitDepth::Eight => (data.iter().map(|&b| b as u16).collect(), 8),
        png::BitDepth::Sixteen => (
            data.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect(),
            16,
        ),
        other => {
            return Err(Error::Format(format!(
                "unsupported PNG bit depth {other:?}"
            )))
        }
    };
    let grid = Grid::from_vec(w, h, levels)?;
    Ok((from_levels(&grid, bits), bits))
}
