use std::fmt::Write as _;

use super::{fan, MeshError, MeshFormat, TriangleMesh};

/// Accepts the plain header and the common ST/C/N prefixed variants.
pub(super) fn has_off_magic(head: &[u8]) -> bool {
    let word_end = head
        .iter()
        .position(|b| b.is_ascii_whitespace())
        .unwrap_or(head.len());
    let word = &head[..word_end];
    word.ends_with(b"OFF")
        && word[..word.len() - 3]
            .iter()
            .all(|b| matches!(b, b'S' | b'T' | b'C' | b'N'))
}

/// Yields (line number, tokens) for non-empty lines with comments stripped.
fn content_lines(src: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    src.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = line.split_whitespace().collect();
        (!tokens.is_empty()).then_some((i + 1, tokens))
    })
}

fn number<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| MeshError::at_line(line, format!("non-numeric token {tok:?}")))
}

pub(super) fn parse(src: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = content_lines(src);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| MeshError::at_line(1, "missing OFF header"))?;
    if !has_off_magic(header[0].as_bytes()) {
        return Err(MeshError::at_line(header_line, "missing OFF header"));
    }
    // Counts may follow the keyword on the same line.
    let (count_line, counts) = if header.len() > 1 {
        (header_line, header[1..].to_vec())
    } else {
        lines
            .next()
            .ok_or_else(|| MeshError::at_line(header_line + 1, "truncated: missing counts"))?
    };
    if counts.len() < 2 {
        return Err(MeshError::at_line(
            count_line,
            "expected vertex and face counts",
        ));
    }
    let nv: usize = number(counts[0], count_line)?;
    let nf: usize = number(counts[1], count_line)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, tok) = lines
            .next()
            .ok_or_else(|| MeshError::at_line(0, format!("truncated: expected {nv} vertices")))?;
        if tok.len() < 3 {
            return Err(MeshError::at_line(line, "vertex needs 3 coordinates"));
        }
        vertices.push([
            number(tok[0], line)?,
            number(tok[1], line)?,
            number(tok[2], line)?,
        ]);
    }

    let mut faces = Vec::with_capacity(nf);
    let mut poly = Vec::new();
    for _ in 0..nf {
        let (line, tok) = lines
            .next()
            .ok_or_else(|| MeshError::at_line(0, format!("truncated: expected {nf} faces")))?;
        let n: usize = number(tok[0], line)?;
        if tok.len() < n + 1 {
            return Err(MeshError::at_line(
                line,
                format!("face lists {n} indices but has fewer"),
            ));
        }
        poly.clear();
        for t in &tok[1..=n] {
            let idx: u32 = number(t, line)?;
            if idx as usize >= nv {
                return Err(MeshError::at_line(
                    line,
                    format!("vertex index {idx} out of range (count {nv})"),
                ));
            }
            poly.push(idx);
        }
        if n < 3 {
            return Err(MeshError::at_line(line, "face has fewer than 3 vertices"));
        }
        fan(&poly, &mut faces);
    }
    TriangleMesh::new(vertices, faces, MeshFormat::Off)
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}
