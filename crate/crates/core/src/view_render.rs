//! Light-field style multi-view rendering: the model is viewed from the 20
//! vertices of a regular dodecahedron with an orthographic, z-buffered,
//! flat-shaded software rasterizer.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{GrayImage, ImageError};
use crate::mesh_io::{cross, dot, norm, sub, Point3, TriangleMesh};
use crate::quality_metrics::entropy;

pub const VIEW_COUNT: usize = 20;
pub const DEFAULT_RENDER_SIZE: usize = 256;

/// Half-width of the square orthographic view volume; the unit model gets
/// a 10% margin.
pub const VIEW_EXTENT: f64 = 1.1;

pub const BACKGROUND: u8 = 255;
pub const SHADE_MIN: u8 = 30;
pub const SHADE_MAX: u8 = 225;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("degenerate mesh: no renderable triangle")]
    DegenerateMesh,
    #[error("render size must be positive")]
    InvalidSize,
    #[error("view index {0} out of range (0..{VIEW_COUNT})")]
    InvalidViewIndex(usize),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Camera placement on the circumscribing unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub direction: Point3,
    pub up: Point3,
}

impl Viewpoint {
    /// Up is global +Z projected onto the image plane, or +Y when the
    /// direction is (anti)parallel to Z.
    pub fn looking_from(direction: Point3) -> Self {
        let d = direction.map(|c| c / norm(direction));
        let mut up = [0.0, 0.0, 1.0];
        let mut proj = sub(up, d.map(|c| c * dot(up, d)));
        if norm(proj) < 1e-6 {
            up = [0.0, 1.0, 0.0];
            proj = sub(up, d.map(|c| c * dot(up, d)));
        }
        let n = norm(proj);
        Self {
            direction: d,
            up: proj.map(|c| c / n),
        }
    }

    pub fn right(&self) -> Point3 {
        cross(self.up, self.direction)
    }
}

/// The 20 vertices of the regular dodecahedron, in a fixed order.
pub fn dodecahedron_viewpoints() -> Vec<Viewpoint> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let signs = [1.0, -1.0];
    let mut dirs = Vec::with_capacity(VIEW_COUNT);
    for &sx in &signs {
        for &sy in &signs {
            for &sz in &signs {
                dirs.push([sx, sy, sz]);
            }
        }
    }
    for &a in &signs {
        for &b in &signs {
            dirs.push([0.0, a * inv, b * phi]);
        }
    }
    for &a in &signs {
        for &b in &signs {
            dirs.push([a * inv, b * phi, 0.0]);
        }
    }
    for &a in &signs {
        for &b in &signs {
            dirs.push([a * phi, 0.0, b * inv]);
        }
    }
    dirs.into_iter().map(Viewpoint::looking_from).collect()
}

/// Orthographic projection along `-vp.direction` into a `size`×`size` image.
/// Faces are shaded by `|normal · direction|` mapped onto 30..=225 over a
/// white background.
pub fn render_view(
    mesh: &TriangleMesh,
    vp: &Viewpoint,
    size: usize,
) -> Result<GrayImage, RenderError> {
    if size == 0 {
        return Err(RenderError::InvalidSize);
    }
    let right = vp.right();
    let up = vp.up;
    let dir = vp.direction;
    let scale = size as f64 / (2.0 * VIEW_EXTENT);
    let project = |p: Point3| -> [f64; 3] {
        [
            (dot(p, right) + VIEW_EXTENT) * scale,
            (VIEW_EXTENT - dot(p, up)) * scale,
            dot(p, dir),
        ]
    };

    let mut image = GrayImage::filled(size, size, BACKGROUND);
    let mut depth = vec![f64::NEG_INFINITY; size * size];
    let mut renderable = false;
    let shade_span = (SHADE_MAX - SHADE_MIN) as f64;

    for face in 0..mesh.faces().len() {
        let tri = mesh.triangle(face);
        let normal = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
        let len = norm(normal);
        if !(len > 1e-15) {
            continue;
        }
        renderable = true;
        let facing = (dot(normal, dir) / len).abs().min(1.0);
        let shade = SHADE_MIN + (facing * shade_span).round() as u8;

        let [a, b, c] = tri.map(project);
        let area = edge(a, b, c);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = a[0].min(b[0]).min(c[0]).floor().max(0.0) as usize;
        let min_y = a[1].min(b[1]).min(c[1]).floor().max(0.0) as usize;
        let max_x = (a[0].max(b[0]).max(c[0]).ceil() as i64).min(size as i64 - 1);
        let max_y = (a[1].max(b[1]).max(c[1]).ceil() as i64).min(size as i64 - 1);
        if max_x < 0 || max_y < 0 {
            continue;
        }
        let inv_area = 1.0 / area;
        for y in min_y..=max_y as usize {
            let py = y as f64 + 0.5;
            for x in min_x..=max_x as usize {
                let p = [x as f64 + 0.5, py, 0.0];
                let w0 = edge(b, c, p) * inv_area;
                let w1 = edge(c, a, p) * inv_area;
                let w2 = edge(a, b, p) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * a[2] + w1 * b[2] + w2 * c[2];
                let slot = y * size + x;
                if z > depth[slot] {
                    depth[slot] = z;
                    image.pixels_mut()[slot] = shade;
                }
            }
        }
    }
    if !renderable {
        return Err(RenderError::DegenerateMesh);
    }
    Ok(image)
}

#[inline]
fn edge(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// How the representative view is chosen among the 20 renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RepresentativePolicy {
    /// Most non-background pixels.
    #[default]
    MaxSilhouette,
    /// Highest Shannon entropy of the intensity histogram.
    MaxEntropy,
    Manual(usize),
}

impl std::str::FromStr for RepresentativePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-silhouette" | "maxsilhouette" => Ok(Self::MaxSilhouette),
            "max-entropy" | "maxentropy" => Ok(Self::MaxEntropy),
            other => {
                let idx = other
                    .strip_prefix("manual:")
                    .or_else(|| other.strip_prefix("manual="))
                    .ok_or_else(|| format!("unknown representative policy {other:?}"))?;
                let i: usize = idx
                    .parse()
                    .map_err(|_| format!("bad manual view index {idx:?}"))?;
                if i >= VIEW_COUNT {
                    return Err(format!(
                        "manual view index {i} out of range 0..{VIEW_COUNT}"
                    ));
                }
                Ok(Self::Manual(i))
            }
        }
    }
}

impl std::fmt::Display for RepresentativePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MaxSilhouette => f.write_str("max-silhouette"),
            Self::MaxEntropy => f.write_str("max-entropy"),
            Self::Manual(i) => write!(f, "manual:{i}"),
        }
    }
}

/// All 20 renders of one model plus the chosen representative.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub model_id: String,
    pub images: [GrayImage; VIEW_COUNT],
    pub representative_index: usize,
}

impl ViewSet {
    pub fn representative(&self) -> &GrayImage {
        &self.images[self.representative_index]
    }

    /// Writes `<model_id>_viewNN.png` for every view and `<model_id>_repr.png`;
    /// returns the 20 view paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
        std::fs::create_dir_all(dir).map_err(|e| ImageError::Write {
            path: dir.display().to_string(),
            source: ::image::ImageError::IoError(e),
        })?;
        let mut paths = Vec::with_capacity(VIEW_COUNT);
        for (i, img) in self.images.iter().enumerate() {
            let path = dir.join(view_file_name(&self.model_id, i));
            img.save_png(&path)?;
            paths.push(path);
        }
        self.representative()
            .save_png(dir.join(repr_file_name(&self.model_id)))?;
        Ok(paths)
    }
}

pub fn view_file_name(model_id: &str, index: usize) -> String {
    format!("{model_id}_view{index:02}.png")
}

pub fn repr_file_name(model_id: &str) -> String {
    format!("{model_id}_repr.png")
}

pub fn select_representative(
    images: &[GrayImage; VIEW_COUNT],
    policy: RepresentativePolicy,
) -> Result<usize, RenderError> {
    match policy {
        RepresentativePolicy::Manual(i) if i < VIEW_COUNT => Ok(i),
        RepresentativePolicy::Manual(i) => Err(RenderError::InvalidViewIndex(i)),
        RepresentativePolicy::MaxSilhouette => Ok(first_argmax(
            images.iter().map(|im| im.foreground_count() as f64),
        )),
        RepresentativePolicy::MaxEntropy => Ok(first_argmax(images.iter().map(entropy))),
    }
}

/// Lowest index among the maxima.
fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn render_all_views(
    model_id: &str,
    mesh: &TriangleMesh,
    size: usize,
    policy: RepresentativePolicy,
) -> Result<ViewSet, RenderError> {
    let viewpoints = dodecahedron_viewpoints();
    let rendered: Vec<GrayImage> = viewpoints
        .par_iter()
        .map(|vp| render_view(mesh, vp, size))
        .collect::<Result<_, _>>()?;
    let images: [GrayImage; VIEW_COUNT] =
        rendered.try_into().expect("dodecahedron has 20 vertices");
    let representative_index = select_representative(&images, policy)?;
    Ok(ViewSet {
        model_id: model_id.to_owned(),
        images,
        representative_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::{normalize_mesh, MeshFormat};
    use crate::synthetic::{cuboid, icosphere};

    #[test]
    fn twenty_unit_viewpoints_in_antipodal_pairs() {
        let vps = dodecahedron_viewpoints();
        assert_eq!(vps.len(), VIEW_COUNT);
        let mut paired = 0;
        for vp in &vps {
            assert!((norm(vp.direction) - 1.0).abs() < 1e-9);
            assert!((norm(vp.up) - 1.0).abs() < 1e-9);
            assert!(dot(vp.direction, vp.up).abs() < 1e-9);
            let opposite = vp.direction.map(|c| -c);
            let matches = vps
                .iter()
                .filter(|o| norm(sub(o.direction, opposite)) < 1e-9)
                .count();
            assert_eq!(matches, 1);
            paired += 1;
        }
        assert_eq!(paired / 2, 10);
    }

    #[test]
    fn up_falls_back_to_y_on_z_axis() {
        let vp = Viewpoint::looking_from([0.0, 0.0, 2.0]);
        assert_eq!(vp.up, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_mesh_is_degenerate() {
        let m = TriangleMesh::new(vec![[0.0; 3]; 3], vec![], MeshFormat::Obj).unwrap();
        let vp = dodecahedron_viewpoints()[0];
        assert!(matches!(
            render_view(&m, &vp, 64),
            Err(RenderError::DegenerateMesh)
        ));
    }

    #[test]
    fn head_on_triangle_has_single_shade() {
        let vp = Viewpoint::looking_from([0.0, 0.0, 1.0]);
        let m = TriangleMesh::new(
            vec![[-0.8, -0.8, 0.0], [0.8, -0.8, 0.0], [0.0, 0.8, 0.0]],
            vec![[0, 1, 2]],
            MeshFormat::Obj,
        )
        .unwrap();
        let img = render_view(&m, &vp, 64).unwrap();
        let fg: Vec<u8> = img.pixels().iter().copied().filter(|&p| p != 255).collect();
        assert!(!fg.is_empty());
        assert!(fg.iter().all(|&p| p == SHADE_MAX));
    }

    #[test]
    fn foreground_never_reaches_background_value() {
        let m = normalize_mesh(&cuboid([1.0, 0.7, 0.4])).unwrap();
        for vp in dodecahedron_viewpoints() {
            let img = render_view(&m, &vp, 96).unwrap();
            assert!(img
                .pixels()
                .iter()
                .all(|&p| p == BACKGROUND || (SHADE_MIN..=SHADE_MAX).contains(&p)));
        }
    }

    #[test]
    fn policies() {
        let m = normalize_mesh(&icosphere(2, 1.0)).unwrap();
        let views = render_all_views("s", &m, 64, RepresentativePolicy::Manual(7)).unwrap();
        assert_eq!(views.representative_index, 7);
        assert!(matches!(
            select_representative(&views.images, RepresentativePolicy::Manual(20)),
            Err(RenderError::InvalidViewIndex(20))
        ));
        assert!(
            select_representative(&views.images, RepresentativePolicy::MaxEntropy).unwrap() < 20
        );
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "manual:3".parse::<RepresentativePolicy>().unwrap(),
            RepresentativePolicy::Manual(3)
        );
        assert!("manual:20".parse::<RepresentativePolicy>().is_err());
        assert_eq!(
            "max-entropy".parse::<RepresentativePolicy>().unwrap(),
            RepresentativePolicy::MaxEntropy
        );
    }
}
