//! Procedural meshes and a seeded toy corpus of boxes, spheres and tori.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh_io::{write_obj, MeshFormat, Point3, TriangleMesh};

/// Axis-aligned box centered at the origin with full extents `size`.
pub fn cuboid(size: Point3) -> TriangleMesh {
    let h = size.map(|s| s / 2.0);
    let vertices: Vec<Point3> = (0..8)
        .map(|i| {
            [
                if i & 1 != 0 { h[0] } else { -h[0] },
                if i & 2 != 0 { h[1] } else { -h[1] },
                if i & 4 != 0 { h[2] } else { -h[2] },
            ]
        })
        .collect();
    // Outward-facing quads, bit layout x=1 y=2 z=4.
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(vertices, faces, MeshFormat::Obj).expect("static topology")
}

/// Subdivided icosahedron projected onto the sphere of `radius`.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |v: Point3| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|c| c / n)
    };
    for v in &mut vertices {
        *v = unit(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Point3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
                vertices.push(unit([
                    (pa[0] + pb[0]) / 2.0,
                    (pa[1] + pb[1]) / 2.0,
                    (pa[2] + pb[2]) / 2.0,
                ]));
                (vertices.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices
        .into_iter()
        .map(|v| v.map(|c| c * radius))
        .collect();
    TriangleMesh::new(vertices, faces, MeshFormat::Obj).expect("static topology")
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, rings: u32, sides: u32) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((rings * sides) as usize);
    for i in 0..rings {
        let u = i as f64 / rings as f64 * std::f64::consts::TAU;
        for j in 0..sides {
            let v = j as f64 / sides as f64 * std::f64::consts::TAU;
            let r = major + minor * v.cos();
            vertices.push([r * u.cos(), r * u.sin(), minor * v.sin()]);
        }
    }
    let idx = |i: u32, j: u32| (i % rings) * sides + (j % sides);
    let mut faces = Vec::with_capacity((rings * sides * 2) as usize);
    for i in 0..rings {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces, MeshFormat::Obj).expect("static topology")
}

/// Rotates around the z axis, then the x axis.
pub fn rotate(mesh: &TriangleMesh, about_z: f64, about_x: f64) -> TriangleMesh {
    let (sz, cz) = about_z.sin_cos();
    let (sx, cx) = about_x.sin_cos();
    mesh.map_vertices(|[x, y, z]| {
        let (x, y) = (cz * x - sz * y, sz * x + cz * y);
        let (y, z) = (cx * y - sx * z, sx * y + cx * z);
        [x, y, z]
    })
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub class: &'static str,
    pub model_id: String,
    pub mesh: TriangleMesh,
}

/// `per_class` boxes, spheres and tori with seeded shape and pose jitter.
pub fn toy_corpus(per_class: usize, seed: u64) -> Vec<ToyModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * 3);
    for i in 0..per_class {
        let size = [
            rng.gen_range(0.6..1.4),
            rng.gen_range(0.6..1.4),
            rng.gen_range(0.6..1.4),
        ];
        let mesh = rotate(
            &cuboid(size),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        );
        out.push(ToyModel {
            class: "box",
            model_id: format!("box_{i:02}"),
            mesh,
        });
    }
    for i in 0..per_class {
        let r = rng.gen_range(0.5..1.5);
        let mesh = icosphere(rng.gen_range(1..=3), r);
        out.push(ToyModel {
            class: "sphere",
            model_id: format!("sphere_{i:02}"),
            mesh,
        });
    }
    for i in 0..per_class {
        let major = 1.0;
        let minor = rng.gen_range(0.2..0.45);
        let mesh = rotate(
            &torus(major, minor, 32, 16),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        );
        out.push(ToyModel {
            class: "torus",
            model_id: format!("torus_{i:02}"),
            mesh,
        });
    }
    out
}

/// Writes the corpus as `root/<class>/<model_id>.obj`.
pub fn write_toy_corpus(models: &[ToyModel], root: &Path) -> std::io::Result<()> {
    for m in models {
        let dir = root.join(m.class);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{}.obj", m.model_id)), write_obj(&m.mesh))?;
    }
    Ok(())
}
