//! Binary and ASCII STL reading, binary STL writing.
//!
//! Binary layout: 80-byte header, little-endian `u32` triangle count, then
//! one 50-byte record per triangle (normal `3×f32`, vertices `9×f32`,
//! `u16` attribute count). Normals in the file are ignored on read; winding
//! is taken from vertex order.

use std::io::{self, Write};

use nalgebra::Point3;
use thiserror::Error;

use super::mesh::WELD_TOLERANCE;
use super::{AssetId, GeometryError, TriMesh};

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

#[derive(Debug, Error)]
pub enum StlError {
    #[error("truncated STL at byte offset {offset}: {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("STL declares {declared} triangles but the buffer holds {actual}")]
    CountMismatch { declared: u32, actual: usize },
    #[error("ASCII STL line {line}: {message}")]
    Ascii { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses binary or ASCII STL and welds the resulting soup.
pub fn load_stl(bytes: &[u8], asset_id: AssetId) -> Result<TriMesh, StlError> {
    let soup = if is_ascii(bytes) {
        parse_ascii(bytes)?
    } else {
        parse_binary(bytes)?
    };
    Ok(TriMesh::welded(&soup, WELD_TOLERANCE, asset_id)?)
}

fn is_ascii(bytes: &[u8]) -> bool {
    if bytes.len() >= HEADER_LEN + 4 {
        let declared = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if HEADER_LEN + 4 + declared * RECORD_LEN == bytes.len() {
            return false;
        }
    }
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    if !bytes[start..].starts_with(b"solid") {
        return false;
    }
    // Binary headers sometimes begin with "solid" too.
    let probe = &bytes[..bytes.len().min(1024)];
    let text = String::from_utf8_lossy(probe);
    text.contains("facet") || text.contains("endsolid")
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>, StlError> {
    if bytes.len() < HEADER_LEN {
        return Err(StlError::Truncated {
            offset: 0,
            what: "80-byte header",
        });
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(StlError::Truncated {
            offset: HEADER_LEN,
            what: "triangle count",
        });
    }
    let declared = u32::from_le_bytes(bytes[80..84].try_into().unwrap());
    let body = bytes.len() - HEADER_LEN - 4;
    let available = body / RECORD_LEN;
    if (declared as usize) > available {
        return Err(StlError::Truncated {
            offset: HEADER_LEN + 4 + available * RECORD_LEN,
            what: "triangle record",
        });
    }
    if (declared as usize) < available || body % RECORD_LEN != 0 {
        return Err(StlError::CountMismatch {
            declared,
            actual: available,
        });
    }
    let mut soup = Vec::with_capacity(declared as usize);
    for rec in bytes[HEADER_LEN + 4..].chunks_exact(RECORD_LEN) {
        let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
        // floats 0..3 are the facet normal
        soup.push([
            Point3::new(f(3), f(4), f(5)),
            Point3::new(f(6), f(7), f(8)),
            Point3::new(f(9), f(10), f(11)),
        ]);
    }
    Ok(soup)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Point3<f64>; 3]>, StlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StlError::Ascii {
        line: 1,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut soup = Vec::new();
    let mut current: Vec<Point3<f64>> = Vec::with_capacity(3);
    let mut in_facet = false;
    let mut seen_end = false;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        let err = |message: String| StlError::Ascii {
            line: line_no,
            message,
        };
        match keyword {
            "solid" if soup.is_empty() && !in_facet => {}
            "facet" => {
                if in_facet {
                    return Err(err("nested facet".into()));
                }
                in_facet = true;
                current.clear();
            }
            "outer" | "endloop" => {}
            "vertex" => {
                if !in_facet {
                    return Err(err("vertex outside facet".into()));
                }
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| err("vertex needs 3 coordinates".into()))?;
                    *c = tok.parse().map_err(|_| err(format!("bad coordinate {tok:?}")))?;
                }
                current.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            "endfacet" => {
                if current.len() != 3 {
                    return Err(err(format!("facet has {} vertices, expected 3", current.len())));
                }
                soup.push([current[0], current[1], current[2]]);
                in_facet = false;
            }
            "endsolid" => {
                seen_end = true;
                break;
            }
            other => return Err(err(format!("unexpected token {other:?}"))),
        }
    }
    if in_facet || !seen_end {
        return Err(StlError::Ascii {
            line: text.lines().count(),
            message: "unexpected end of input (missing endfacet/endsolid)".into(),
        });
    }
    Ok(soup)
}

/// Writes `mesh` as binary STL with recomputed facet normals.
pub fn write_stl_binary<W: Write>(mesh: &TriMesh, mut w: W) -> Result<(), StlError> {
    let mut header = [0u8; HEADER_LEN];
    let tag = format!("binary STL asset {}", mesh.asset_id());
    header[..tag.len().min(HEADER_LEN)].copy_from_slice(&tag.as_bytes()[..tag.len().min(HEADER_LEN)]);
    w.write_all(&header)?;
    w.write_all(&(mesh.triangle_count() as u32).to_le_bytes())?;
    for i in 0..mesh.triangle_count() {
        let tri = mesh.triangle(i);
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for c in n.iter() {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
        for p in &tri {
            for c in p.coords.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        w.write_all(&0u16.to_le_bytes())?;
    }
    Ok(())
}
