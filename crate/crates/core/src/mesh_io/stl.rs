use std::fmt::Write as _;

use super::{cross, fan, norm, sub, MeshError, MeshFormat, Point3, TriangleMesh};

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

/// Each facet contributes its own vertices; nothing is welded.
pub(super) fn parse_ascii(src: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces = Vec::new();
    let mut loop_indices: Vec<u32> = Vec::new();
    let mut in_loop = false;
    for (i, line) in src.lines().enumerate() {
        let line_no = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("outer") => {
                in_loop = true;
                loop_indices.clear();
            }
            Some("vertex") => {
                if !in_loop {
                    return Err(MeshError::at_line(line_no, "vertex outside of a loop"));
                }
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let t = tok
                        .next()
                        .ok_or_else(|| MeshError::at_line(line_no, "vertex needs 3 coordinates"))?;
                    *slot = t.parse().map_err(|_| {
                        MeshError::at_line(line_no, format!("non-numeric token {t:?}"))
                    })?;
                }
                loop_indices.push(vertices.len() as u32);
                vertices.push(c);
            }
            Some("endloop") => {
                if loop_indices.len() < 3 {
                    return Err(MeshError::at_line(
                        line_no,
                        "facet has fewer than 3 vertices",
                    ));
                }
                fan(&loop_indices, &mut faces);
                in_loop = false;
            }
            _ => {}
        }
    }
    if in_loop {
        return Err(MeshError::at_line(
            src.lines().count(),
            "truncated: unterminated loop",
        ));
    }
    TriangleMesh::new(vertices, faces, MeshFormat::StlAscii)
}

fn read_f32(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

pub(super) fn parse_binary(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(MeshError::at_byte(
            bytes.len(),
            "truncated: missing triangle count",
        ));
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let needed = HEADER_LEN + 4 + count * RECORD_LEN;
    if bytes.len() < needed {
        let complete = (bytes.len() - HEADER_LEN - 4) / RECORD_LEN;
        return Err(MeshError::at_byte(
            HEADER_LEN + 4 + complete * RECORD_LEN,
            format!("truncated: header declares {count} triangles, {complete} present"),
        ));
    }
    let mut vertices = Vec::with_capacity(count * 3);
    let mut faces = Vec::with_capacity(count);
    for t in 0..count {
        let base = HEADER_LEN + 4 + t * RECORD_LEN + 12;
        for corner in 0..3 {
            let at = base + corner * 12;
            vertices.push([
                read_f32(bytes, at) as f64,
                read_f32(bytes, at + 4) as f64,
                read_f32(bytes, at + 8) as f64,
            ]);
        }
        let i = (t * 3) as u32;
        faces.push([i, i + 1, i + 2]);
    }
    TriangleMesh::new(vertices, faces, MeshFormat::StlBinary)
}

fn unit_normal(t: &[Point3; 3]) -> Point3 {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let len = norm(n);
    if len > 0.0 {
        n.map(|x| x / len)
    } else {
        [0.0; 3]
    }
}

pub fn write_stl_ascii(mesh: &TriangleMesh, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "solid {name}");
    for i in 0..mesh.faces().len() {
        let t = mesh.triangle(i);
        let n = unit_normal(&t);
        let _ = writeln!(out, "  facet normal {} {} {}", n[0], n[1], n[2]);
        out.push_str("    outer loop\n");
        for v in &t {
            let _ = writeln!(out, "      vertex {} {} {}", v[0], v[1], v[2]);
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(out, "endsolid {name}");
    out
}

/// Coordinates are narrowed to f32 as the format requires.
pub fn write_stl_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN];
    out[..9].copy_from_slice(b"cadsketch");
    out.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    for i in 0..mesh.faces().len() {
        let t = mesh.triangle(i);
        for c in unit_normal(&t) {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for v in &t {
            for c in v {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}
