//! ASCII OBJ with `v` and `f` records only (1-based indices).
//!
//! Vertices are written as `v x y z`. Internally points are `(z, y, x)`,
//! a mirrored frame, so face winding is reversed on write and on read to
//! keep normals outward in both.

use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::Point3;

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in &mesh.vertices {
        // Display for f64 is shortest round-trip, so parse(write(m)) == m bitwise
        let _ = writeln!(s, "v {} {} {}", v[2], v[1], v[0]);
    }
    for &[a, b, c] in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", a + 1, c + 1, b + 1);
    }
    s
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let xyz: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Format(format!("line {}: bad vertex: {e}", lineno + 1)))?;
                if xyz.len() != 3 {
                    return Err(Error::Format(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Point3::new(xyz[2], xyz[1], xyz[0]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .ok()
                            .filter(|&i| i >= 1 && i <= u32::MAX as i64)
                            .map(|i| (i - 1) as u32)
                            .ok_or_else(|| Error::Format(format!("line {}: bad face index {t:?}", lineno + 1)))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Format(format!(
                        "line {}: only triangles are supported, got {} indices",
                        lineno + 1,
                        idx.len()
                    )));
                }
                faces.push([idx[0], idx[2], idx[1]]);
            }
            _ => {}
        }
    }
    let nv = vertices.len() as u32;
    if let Some(f) = faces.iter().position(|f| f.iter().any(|&i| i >= nv)) {
        return Err(Error::Format(format!("face {f} references a missing vertex")));
    }
    Ok(TriMesh { vertices, faces })
}

pub fn read_file(path: impl AsRef<Path>) -> Result<TriMesh> {
    parse_obj(&std::fs::read_to_string(path)?)
}

pub fn write_file(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, to_obj(mesh))?;
    Ok(())
}
