//! Netpbm PGM images, P2 (ascii) and P5 (binary). 16-bit binary samples are
//! big-endian per the format; maxval selects the bit depth.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

use super::{check_bits, from_levels, to_levels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmEncoding {
    #[default]
    Binary,
    Ascii,
}

/// Write a unit-interval intensity map as PGM with the given bit depth.
pub fn write_pgm(
    path: &Path,
    map: &Grid<f64>,
    bits: u8,
    encoding: PgmEncoding,
) -> Result<()> {
    check_bits(bits)?;
    let levels = to_levels(map, bits);
    let maxval = (1u32 << bits) - 1;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let magic = match encoding {
        PgmEncoding::Binary => "P5",
        PgmEncoding::Ascii => "P2",
    };
    write!(w, "{magic}\n{} {}\n{maxval}\n", map.width(), map.height())?;
    match encoding {
        PgmEncoding::Binary => {
            if bits == 8 {
                let buf: Vec<u8> = levels.as_slice().iter().map(|&v| v as u8).collect();
                w.write_all(&buf)?;
            } else {
                let mut buf = Vec::with_capacity(levels.len() * 2);
                for &v in levels.as_slice() {
                    buf.extend_from_slice(&v.to_be_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        PgmEncoding::Ascii => {
            for (i, &v) in levels.as_slice().iter().enumerate() {
                if i % 16 == 15 {
                    writeln!(w, "{v}")?;
                } else {
                    write!(w, "{v} ")?;
                }
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a P2/P5 PGM into a unit-interval map plus its bit depth.
pub fn read_pgm(path: &Path) -> Result<(Grid<f64>, u8)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut header_fields = Vec::with_capacity(4);
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic)?;
    let magic = std::str::from_utf8(&magic)
        .map_err(|_| Error::Format("PGM magic is not ASCII".into()))?
        .to_string();
    if magic != "P5" && magic != "P2" {
        return Err(Error::Format(format!("not a PGM file (magic {magic:?})")));
    }
    // width, height, maxval with optional '#' comments.
    while header_fields.len() < 3 {
        let mut token = String::new();
        loop {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            let c = byte[0] as char;
            if c == '#' {
                let mut comment = String::new();
                r.read_line(&mut comment)?;
                continue;
            }
            if c.is_ascii_whitespace() {
                if token.is_empty() {
                    continue;
                }
                break;
            }
            token.push(c);
        }
        header_fields.push(
            token
                .parse::<u32>()
                .map_err(|_| Error::Format(format!("bad PGM header token {token:?}")))?,
        );
    }
    let (width, height, maxval) = (
        header_fields[0] as usize,
        header_fields[1] as usize,
        header_fields[2],
    );
    let bits = match maxval {
        255 => 8,
        65535 => 16,
        other => {
            return Err(Error::Format(format!(
                "unsupported PGM maxval {other}; expected 255 or 65535"
            )))
        }
    };
    let n = width * height;
    let mut levels = Vec::with_capacity(n);
    match magic.as_str() {
        "P5" => {
            if bits == 8 {
                let mut buf = vec![0u8; n];
                r.read_exact(&mut buf)?;
                levels.extend(buf.into_iter().map(|v| v as u16));
            } else {
                let mut buf = vec![0u8; n * 2];
                r.read_exact(&mut buf)?;
                levels.extend(
                    buf.chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]])),
                );
            }
        }
        _ => {
            let mut text = String::new();
            r.read_to_string(&mut text)?;
            // Plain-format comments run from '#' to end of line.
            let text: String = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .collect::<Vec<_>>()
                .join("\n");
            for token in text.split_ascii_whitespace() {
                let v = token
                    .parse::<u32>()
                    .map_err(|_| Error::Format(format!("bad P2 sample {token:?}")))?;
                if v > maxval {
                    return Err(Error::Format(format!("P2 sample {v} exceeds maxval")));
                }
                levels.push(v as u16);
            }
            if levels.len() != n {
                return Err(Error::Format(format!(
                    "P2 file has {} samples, expected {n}",
                    levels.len()
                )));
            }
        }
    }
    let grid = Grid::from_vec(width, height, levels)?;
    Ok((from_levels(&grid, bits), bits))
}
