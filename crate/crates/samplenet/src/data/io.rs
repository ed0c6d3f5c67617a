//! Point cloud file formats: ASCII XYZ and ASCII PLY, plus the dataset
//! manifest CSV.
//!
//! XYZ is one `x y z` triple per line. PLY carries the standard header
//! with `element vertex N` and float x/y/z properties; only ASCII PLY is
//! supported. Values are written with shortest round-trip formatting, so
//! write-then-read reproduces coordinates exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::PointCloud;

use super::{DataError, Split};

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), DataError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let mut out = String::new();
    match ext.as_str() {
        "xyz" => {
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
            }
        }
        "ply" => {
            writeln!(out, "ply").unwrap();
            writeln!(out, "format ascii 1.0").unwrap();
            writeln!(out, "element vertex {}", cloud.len()).unwrap();
            writeln!(out, "property float x").unwrap();
            writeln!(out, "property float y").unwrap();
            writeln!(out, "property float z").unwrap();
            writeln!(out, "end_header").unwrap();
            for p in cloud.points() {
                writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
            }
        }
        other => return Err(DataError::UnknownFormat(other.to_string())),
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, DataError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let text = std::fs::read_to_string(path)?;
    match ext.as_str() {
        "xyz" => parse_xyz(&text),
        "ply" => parse_ply(&text),
        other => Err(DataError::UnknownFormat(other.to_string())),
    }
}

fn parse_point(line: &str, line_no: usize) -> Result<[f64; 3], DataError> {
    let mut coords = [0.0; 3];
    let mut tokens = line.split_whitespace();
    for c in &mut coords {
        let tok = tokens.next().ok_or(DataError::Malformed {
            line: line_no,
            message: "expected three coordinates".into(),
        })?;
        *c = tok.parse().map_err(|_| DataError::Malformed {
            line: line_no,
            message: format!("non-float token {tok:?}"),
        })?;
    }
    if tokens.next().is_some() {
        return Err(DataError::Malformed {
            line: line_no,
            message: "trailing tokens after coordinates".into(),
        });
    }
    Ok(coords)
}

fn parse_xyz(text: &str) -> Result<PointCloud, DataError> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        pts.push(parse_point(line, i + 1)?);
    }
    PointCloud::new(pts).map_err(DataError::from)
}

fn parse_ply(text: &str) -> Result<PointCloud, DataError> {
    let mut lines = text.lines().enumerate();
    let mut vertex_count: Option<usize> = None;
    let mut property_names: Vec<String> = Vec::new();

    let (_, first) = lines.next().ok_or(DataError::Malformed {
        line: 1,
        message: "empty file".into(),
    })?;
    if first.trim() != "ply" {
        return Err(DataError::Malformed {
            line: 1,
            message: "missing ply magic".into(),
        });
    }
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let line_no = i + 1;
        let line = line.trim();
        if line == "end_header" {
            header_done = true;
            break;
        }
        if line.starts_with("comment") || line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("format ") {
            if !rest.starts_with("ascii") {
                return Err(DataError::Malformed {
                    line: line_no,
                    message: format!("unsupported format {rest:?}; only ascii 1.0"),
                });
            }
        } else if let Some(rest) = line.strip_prefix("element ") {
            let mut tok = rest.split_whitespace();
            let name = tok.next().unwrap_or("");
            if name == "vertex" {
                let count = tok.next().and_then(|s| s.parse().ok()).ok_or(
                    DataError::Malformed {
                        line: line_no,
                        message: "bad vertex count".into(),
                    },
                )?;
                vertex_count = Some(count);
            } else {
                return Err(DataError::Malformed {
                    line: line_no,
                    message: format!("unsupported element {name:?}"),
                });
            }
        } else if let Some(rest) = line.strip_prefix("property ") {
            let mut tok = rest.split_whitespace();
            let ty = tok.next().unwrap_or("");
            if !matches!(ty, "float" | "float32" | "double" | "float64") {
                return Err(DataError::Malformed {
                    line: line_no,
                    message: format!("unsupported property type {ty:?}"),
                });
            }
            property_names.push(tok.next().unwrap_or("").to_string());
        } else {
            return Err(DataError::Malformed {
                line: line_no,
                message: format!("unexpected header line {line:?}"),
            });
        }
    }
    if !header_done {
        return Err(DataError::Malformed {
            line: 0,
            message: "missing end_header".into(),
        });
    }
    if property_names != ["x", "y", "z"] {
        return Err(DataError::Malformed {
            line: 0,
            message: format!("expected properties x y z, got {property_names:?}"),
        });
    }
    let count = vertex_count.ok_or(DataError::Malformed {
        line: 0,
        message: "missing element vertex".into(),
    })?;

    let mut pts = Vec::with_capacity(count);
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if pts.len() == count {
            return Err(DataError::VertexCount {
                declared: count,
                actual: pts.len() + 1,
            });
        }
        pts.push(parse_point(line, line_no)?);
    }
    if pts.len() != count {
        return Err(DataError::VertexCount {
            declared: count,
            actual: pts.len(),
        });
    }
    PointCloud::new(pts).map_err(DataError::from)
}

/// One dataset manifest row: relative path, class id, split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub class_id: usize,
    pub split: Split,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), DataError> {
    let mut out = String::from("path,class_id,split\n");
    for row in rows {
        writeln!(out, "{},{},{}", row.path, row.class_id, row.split.as_str()).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let mut tok = line.split(',');
        let (Some(p), Some(c), Some(s)) = (tok.next(), tok.next(), tok.next()) else {
            return Err(DataError::Malformed {
                line: i + 1,
                message: "manifest row needs path,class_id,split".into(),
            });
        };
        rows.push(ManifestRow {
            path: p.to_string(),
            class_id: c.parse().map_err(|_| DataError::Malformed {
                line: i + 1,
                message: format!("bad class id {c:?}"),
            })?,
            split: s.parse()?,
        });
    }
    Ok(rows)
}
