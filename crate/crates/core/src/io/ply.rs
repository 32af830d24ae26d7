//! PLY point clouds: float32 vertex data as ascii or binary little-endian,
//! with optional per-point intensity and source-pixel properties and header
//! comments carrying the rig fingerprint and pattern spec.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::triangulate::{CloudPoint, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

#[derive(Debug, Clone, Default)]
pub struct PlyOptions {
    pub format: PlyFormat,
    pub with_intensity: bool,
    pub with_pixel: bool,
    /// Free-form header comment lines (no newlines).
    pub comments: Vec<String>,
}

pub fn write_ply(path: &Path, cloud: &PointCloud, opts: &PlyOptions) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let format = match opts.format {
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
        PlyFormat::Ascii => "ascii",
    };
    write!(w, "ply\nformat {format} 1.0\n")?;
    for c in &opts.comments {
        write!(w, "comment {c}\n")?;
    }
    write!(w, "element vertex {}\n", cloud.len())?;
    write!(w, "property float x\nproperty float y\nproperty float z\n")?;
    if opts.with_intensity {
        write!(w, "property float intensity\n")?;
    }
    if opts.with_pixel {
        write!(w, "property float u_c\nproperty float v_c\n")?;
    }
    write!(w, "end_header\n")?;

    for p in &cloud.points {
        let mut vals: Vec<f32> = vec![
            p.position[0] as f32,
            p.position[1] as f32,
            p.position[2] as f32,
        ];
        if opts.with_intensity {
            vals.push(p.intensity);
        }
        if opts.with_pixel {
            vals.push(p.pixel.0 as f32);
            vals.push(p.pixel.1 as f32);
        }
        match opts.format {
            PlyFormat::BinaryLittleEndian => {
                for v in vals {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            PlyFormat::Ascii => {
                let line: Vec<String> = vals.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a PLY written by [`write_ply`] (or any single-vertex-element float32
/// PLY with x/y/z and optionally intensity/u_c/v_c properties). Returns the
/// cloud and the header comments.
pub fn read_ply(path: &Path) -> Result<(PointCloud, Vec<String>)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Format("not a PLY file".into()));
    }
    let mut format: Option<PlyFormat> = None;
    let mut count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut comments = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("PLY header ended prematurely".into()));
        }
        let line = line.trim_end();
        let mut it = line.split_ascii_whitespace();
        match it.next() {
            Some("format") => {
                format = Some(match it.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(Error::Format(format!(
                            "unsupported PLY format {other:?}"
                        )))
                    }
                });
            }
            Some("comment") => {
                comments.push(line.trim_start_matches("comment").trim().to_string())
            }
            Some("element") => {
                let kind = it.next().unwrap_or("");
                let n: usize = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Format("bad element line".into()))?;
                if kind != "vertex" {
                    return Err(Error::Format(format!(
                        "unsupported PLY element {kind:?}"
                    )));
                }
                count = Some(n);
            }
            Some("property") => {
                let ty = it.next().unwrap_or("");
                if ty != "float" && ty != "float32" {
                    return Err(Error::Format(format!(
                        "unsupported PLY property type {ty:?}"
                    )));
                }
                properties.push(it.next().unwrap_or("").to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::Format("PLY missing format line".into()))?;
    let count = count.ok_or_else(|| Error::Format("PLY missing vertex element".into()))?;
    let find = |name: &str| properties.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Format("PLY vertex lacks x/y/z".into())),
    };
    let ii = find("intensity");
    let iu = find("u_c");
    let iv = find("v_c");

    let n_props = properties.len();
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(count);
    match format {
        PlyFormat::BinaryLittleEndian => {
            let mut buf = vec![0u8; count * n_props * 4];
            r.read_exact(&mut buf)?;
            for i in 0..count {
                let base = i * n_props * 4;
                rows.push(
                    (0..n_props)
                        .map(|j| {
                            let o = base + j * 4;
                            f32::from_le_bytes([buf[o], buf[o + 1], buf[o + 2], buf[o + 3]])
                        })
                        .collect(),
                );
            }
        }
        PlyFormat::Ascii => {
            let mut text = String::new();
            r.read_to_string(&mut text)?;
            for line in text.lines().take(count) {
                let vals: std::result::Result<Vec<f32>, _> = line
                    .split_ascii_whitespace()
                    .map(|t| t.parse::<f32>())
                    .collect();
                let vals = vals.map_err(|_| Error::Format("bad PLY ascii row".into()))?;
                if vals.len() != n_props {
                    return Err(Error::Format(format!(
                        "PLY row has {} values, header declares {n_props}",
                        vals.len()
                    )));
                }
                rows.push(vals);
            }
            if rows.len() != count {
                return Err(Error::Format(format!(
                    "PLY has {} rows, header declares {count}",
                    rows.len()
                )));
            }
        }
    }
    let points = rows
        .into_iter()
        .map(|vals| CloudPoint {
            position: [vals[ix] as f64, vals[iy] as f64, vals[iz] as f64],
            pixel: match (iu, iv) {
                (Some(a), Some(b)) => (vals[a] as u32, vals[b] as u32),
                _ => (0, 0),
            },
            intensity: ii.map_or(0.0, |j| vals[j]),
        })
        .collect();
    Ok((PointCloud { points }, comments))
}
