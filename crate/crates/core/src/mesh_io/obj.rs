use std::fmt::Write as _;

use super::{fan, MeshError, MeshFormat, TriangleMesh};

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve(token: &str, count: usize, line: usize) -> Result<u32, MeshError> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| MeshError::at_line(line, format!("non-numeric token {token:?}")))?;
    let idx = match raw {
        0 => None,
        r if r > 0 => Some(r - 1),
        r => Some(count as i64 + r),
    };
    match idx {
        Some(i) if i >= 0 && (i as usize) < count => Ok(i as u32),
        _ => Err(MeshError::at_line(
            line,
            format!("vertex index {raw} out of range (count {count})"),
        )),
    }
}

/// Geometry only: texture coordinates, normals, groups and materials are
/// skipped.
pub(super) fn parse(src: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for (i, raw_line) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = tok
                        .next()
                        .ok_or_else(|| MeshError::at_line(line_no, "vertex needs 3 coordinates"))?;
                    *slot = t.parse().map_err(|_| {
                        MeshError::at_line(line_no, format!("non-numeric token {t:?}"))
                    })?;
                }
                vertices.push(c);
            }
            Some("f") => {
                poly.clear();
                for t in tok {
                    poly.push(resolve(t, vertices.len(), line_no)?);
                }
                if poly.len() < 3 {
                    return Err(MeshError::at_line(
                        line_no,
                        "face has fewer than 3 vertices",
                    ));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces, MeshFormat::Obj)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}
