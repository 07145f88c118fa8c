//! Mesh parsing (OBJ, OFF, ASCII and binary STL) into a canonical triangle
//! mesh, plus normalization into the unit ball for view rendering.

mod obj;
mod off;
mod stl;

use std::fmt;
use std::path::Path;

use thiserror::Error;

pub use obj::write_obj;
pub use off::write_off;
pub use stl::{write_stl_ascii, write_stl_binary};

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFormat {
    Obj,
    Off,
    StlAscii,
    StlBinary,
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshFormat::Obj => "OBJ",
            MeshFormat::Off => "OFF",
            MeshFormat::StlAscii => "STL_ASCII",
            MeshFormat::StlBinary => "STL_BINARY",
        })
    }
}

/// Where in the source a parse error happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("malformed mesh at {location}: {message}")]
    MalformedFile { location: Location, message: String },
    #[error("unsupported mesh format{}", .0.as_deref().map(|s| format!(": {s}")).unwrap_or_default())]
    UnsupportedFormat(Option<String>),
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(&'static str),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MeshError {
    pub(crate) fn at_line(line: usize, message: impl Into<String>) -> Self {
        MeshError::MalformedFile {
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub(crate) fn at_byte(byte: usize, message: impl Into<String>) -> Self {
        MeshError::MalformedFile {
            location: Location::Byte(byte),
            message: message.into(),
        }
    }
}

/// Triangle soup with indexed faces. Every face index is guaranteed to be in
/// range for `vertices`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[u32; 3]>,
    source_format: MeshFormat,
}

impl TriangleMesh {
    /// Checks index bounds only; an empty face list is allowed here so that
    /// callers can build meshes incrementally. The parsers additionally
    /// require at least one face and three vertices.
    pub fn new(
        vertices: Vec<Point3>,
        faces: Vec<[u32; 3]>,
        source_format: MeshFormat,
    ) -> Result<Self, MeshError> {
        let n = vertices.len();
        if let Some((i, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v as usize >= n))
        {
            return Err(MeshError::MalformedFile {
                location: Location::Line(0),
                message: format!("face {i} {f:?} references a vertex out of range (count {n})"),
            });
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MeshError::MalformedFile {
                location: Location::Line(0),
                message: "non-finite vertex coordinate".into(),
            });
        }
        Ok(Self {
            vertices,
            faces,
            source_format,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn source_format(&self) -> MeshFormat {
        self.source_format
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| triangle_area(&self.triangle(i)))
            .sum()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.vertices.len().max(1) as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        c.map(|s| s / n)
    }

    /// Applies `f` to every vertex, keeping topology.
    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
            source_format: self.source_format,
        }
    }

    fn ensure_parsed_minimum(self) -> Result<Self, MeshError> {
        if self.faces.is_empty() {
            return Err(MeshError::at_line(0, "mesh has no faces"));
        }
        if self.vertices.len() < 3 {
            return Err(MeshError::at_line(0, "mesh has fewer than 3 vertices"));
        }
        Ok(self)
    }
}

pub fn triangle_area(t: &[Point3; 3]) -> f64 {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    0.5 * norm(n)
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Fan-triangulates polygon `poly` around its first vertex.
pub(crate) fn fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

fn binary_stl_length_matches(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as u64;
    84 + 50 * count == bytes.len() as u64
}

fn looks_like_obj(bytes: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return false;
    };
    text.lines()
        .map(str::trim_start)
        .any(|l| l.starts_with("v ") || l.starts_with("v\t"))
}

/// Guesses the format: magic bytes first, then the file extension, then the
/// binary STL length rule.
pub fn detect_format(bytes: &[u8], extension: Option<&str>) -> Result<MeshFormat, MeshError> {
    let start = bytes
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .unwrap_or(bytes.len());
    let head = &bytes[start..];
    if off::has_off_magic(head) {
        return Ok(MeshFormat::Off);
    }
    if head.starts_with(b"solid") {
        // Some exporters write "solid" into binary headers as well.
        if binary_stl_length_matches(bytes) && !bytes.is_ascii() {
            return Ok(MeshFormat::StlBinary);
        }
        return Ok(MeshFormat::StlAscii);
    }
    match extension.map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => return Ok(MeshFormat::Obj),
        Some("off") => return Ok(MeshFormat::Off),
        Some("stl") => {
            return Ok(if binary_stl_length_matches(bytes) {
                MeshFormat::StlBinary
            } else {
                MeshFormat::StlAscii
            })
        }
        _ => {}
    }
    if binary_stl_length_matches(bytes) {
        return Ok(MeshFormat::StlBinary);
    }
    if looks_like_obj(bytes) {
        return Ok(MeshFormat::Obj);
    }
    Err(MeshError::UnsupportedFormat(extension.map(str::to_owned)))
}

/// Parses `bytes` as `format`, or auto-detects when `format` is `None`.
pub fn parse_mesh(bytes: &[u8], format: Option<MeshFormat>) -> Result<TriangleMesh, MeshError> {
    parse_mesh_with_hint(bytes, format, None)
}

fn parse_mesh_with_hint(
    bytes: &[u8],
    format: Option<MeshFormat>,
    extension: Option<&str>,
) -> Result<TriangleMesh, MeshError> {
    if bytes.is_empty() {
        return Err(MeshError::at_byte(0, "empty input"));
    }
    let format = match format {
        Some(f) => f,
        None => detect_format(bytes, extension)?,
    };
    let mesh = match format {
        MeshFormat::Obj => obj::parse(text(bytes)?)?,
        MeshFormat::Off => off::parse(text(bytes)?)?,
        MeshFormat::StlAscii => stl::parse_ascii(text(bytes)?)?,
        MeshFormat::StlBinary => stl::parse_binary(bytes)?,
    };
    mesh.ensure_parsed_minimum()
}

fn text(bytes: &[u8]) -> Result<&str, MeshError> {
    std::str::from_utf8(bytes).map_err(|e| MeshError::at_byte(e.valid_up_to(), "invalid UTF-8"))
}

/// Reads and parses a mesh file, using its extension as a detection hint.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let ext = path.extension().and_then(|e| e.to_str());
    parse_mesh_with_hint(&bytes, None, ext)
}

/// Translates the vertex centroid to the origin and scales uniformly so the
/// farthest vertex lies on the unit sphere.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    if mesh.vertices.is_empty() {
        return Err(MeshError::DegenerateMesh("no vertices"));
    }
    let c = mesh.centroid();
    let radius = mesh
        .vertices
        .iter()
        .map(|&v| norm(sub(v, c)))
        .fold(0.0_f64, f64::max);
    if !(radius > 1e-12) {
        return Err(MeshError::DegenerateMesh("all vertices coincide"));
    }
    let inv = 1.0 / radius;
    Ok(mesh.map_vertices(|v| sub(v, c).map(|x| x * inv)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_at(center: Point3) -> TriangleMesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push([
                center[0] + if i & 1 != 0 { 0.5 } else { -0.5 },
                center[1] + if i & 2 != 0 { 0.5 } else { -0.5 },
                center[2] + if i & 4 != 0 { 0.5 } else { -0.5 },
            ]);
        }
        TriangleMesh::new(v, vec![[0, 1, 3], [0, 3, 2]], MeshFormat::Obj).unwrap()
    }

    #[test]
    fn minimal_off() {
        let m = parse_mesh(b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2", None).unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert_eq!(m.source_format(), MeshFormat::Off);
    }

    #[test]
    fn obj_quad_fans() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = parse_mesh(src.as_bytes(), Some(MeshFormat::Obj)).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn binary_stl_two_triangles() {
        // 80-byte header, count, 2 x 50-byte records = 184 bytes
        let mut bytes = vec![0u8; 80];
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for t in 0..2 {
            bytes.extend_from_slice(&[0u8; 12]);
            for corner in 0..3 {
                for axis in 0..3 {
                    let value = (t * 9 + corner * 3 + axis) as f32;
                    bytes.extend_from_slice(&value.to_le_bytes());
                }
            }
            bytes.extend_from_slice(&[0u8; 2]);
        }
        assert_eq!(bytes.len(), 184);
        let m = parse_mesh(&bytes, None).unwrap();
        assert_eq!(m.source_format(), MeshFormat::StlBinary);
        assert_eq!(m.faces().len(), 2);
        assert_eq!(m.vertices().len(), 6);
        assert_eq!(m.vertices()[4], [12.0, 13.0, 14.0]);
    }

    #[test]
    fn unsupported_without_any_clue() {
        let err = parse_mesh(b"hello world", None).unwrap_err();
        assert!(matches!(err, MeshError::UnsupportedFormat(_)));
    }

    #[test]
    fn empty_input_is_malformed() {
        assert!(matches!(
            parse_mesh(b"", None),
            Err(MeshError::MalformedFile { .. })
        ));
    }

    #[test]
    fn extension_hint_selects_obj() {
        assert_eq!(
            detect_format(b"# comment only\n", Some("OBJ")).unwrap(),
            MeshFormat::Obj
        );
    }

    #[test]
    fn normalize_translates_and_scales() {
        let m = normalize_mesh(&cube_at([5.0, 5.0, 5.0])).unwrap();
        let c = m.centroid();
        assert!(c.iter().all(|x| x.abs() < 1e-12));
        for v in m.vertices() {
            assert!((norm(*v) - 1.0).abs() < 1e-12);
        }
        // cube edge 1 -> half diagonal sqrt(3)/2 maps to 1
        let edge = norm(sub(m.vertices()[1], m.vertices()[0]));
        assert!((edge - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let once = normalize_mesh(&cube_at([1.0, -2.0, 0.3])).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalize_rejects_single_point() {
        let m =
            TriangleMesh::new(vec![[1.0, 2.0, 3.0]; 3], vec![[0, 1, 2]], MeshFormat::Off).unwrap();
        assert!(matches!(
            normalize_mesh(&m),
            Err(MeshError::DegenerateMesh(_))
        ));
    }

    #[test]
    fn out_of_range_face_rejected() {
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]], MeshFormat::Obj).is_err());
    }
}
