//! Procedural meshes used by tests, benchmarks and the CLI `fixture` command.
//!
//! Every generator returns a closed mesh translated so that its vertex
//! centroid sits at the origin.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Vector3;

use crate::mesh::Mesh;

type Cell = (i32, i32, i32);

/// The eight-vertex, twelve-triangle unit cube spanning `[0, 1]^3`.
pub fn unit_cube() -> Mesh {
    let v = [
        [0., 0., 0.],
        [1., 0., 0.],
        [1., 1., 0.],
        [0., 1., 0.],
        [0., 0., 1.],
        [1., 0., 1.],
        [1., 1., 1.],
        [0., 1., 1.],
    ]
    .map(Vector3::from)
    .to_vec();
    let t = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    Mesh::new(v, t).expect("static cube")
}

/// Boundary surface of a set of unit voxels scaled by `cell_size`.
///
/// Each exposed voxel face becomes two outward-facing triangles; grid
/// corners are shared, so the result is watertight.
pub fn voxel_surface(cells: &BTreeSet<Cell>, cell_size: f64) -> Mesh {
    let mut index: BTreeMap<Cell, u32> = BTreeMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut corner = |c: Cell, vertices: &mut Vec<Vector3<f64>>| -> u32 {
        *index.entry(c).or_insert_with(|| {
            vertices.push(Vector3::new(c.0 as f64, c.1 as f64, c.2 as f64) * cell_size);
            (vertices.len() - 1) as u32
        })
    };
    for &(x, y, z) in cells {
        let base = [x, y, z];
        for axis in 0..3 {
            for sign in [1i32, -1] {
                let mut nb = base;
                nb[axis] += sign;
                if cells.contains(&(nb[0], nb[1], nb[2])) {
                    continue;
                }
                let a1 = (axis + 1) % 3;
                let a2 = (axis + 2) % 3;
                let mut quad = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(s, t)| {
                    let mut c = base;
                    c[axis] += (sign > 0) as i32;
                    c[a1] += s;
                    c[a2] += t;
                    (c[0], c[1], c[2])
                });
                if sign < 0 {
                    quad.reverse();
                }
                let q = quad.map(|c| corner(c, &mut vertices));
                triangles.push([q[0], q[1], q[2]]);
                triangles.push([q[0], q[2], q[3]]);
            }
        }
    }
    centered(vertices, triangles)
}

/// Cube of side `size` tessellated into `n × n` quads per face.
pub fn voxel_cube(size: f64, n: i32) -> Mesh {
    let cells = (0..n)
        .flat_map(|x| (0..n).flat_map(move |y| (0..n).map(move |z| (x, y, z))))
        .collect();
    voxel_surface(&cells, size / n as f64)
}

/// Non-convex L-shaped bracket: two `arm × thickness` arms meeting at a
/// right angle, extruded by `depth`, on a grid of `cell` meters.
pub fn l_bracket(arm: f64, thickness: f64, depth: f64, cell: f64) -> Mesh {
    let a = (arm / cell).round() as i32;
    let t = (thickness / cell).round() as i32;
    let d = (depth / cell).round() as i32;
    let mut cells = BTreeSet::new();
    for x in 0..a {
        for y in 0..a {
            if x < t || y < t {
                for z in 0..d {
                    cells.insert((x, y, z));
                }
            }
        }
    }
    voxel_surface(&cells, cell)
}

/// Subdivided icosahedron with a smooth radial bump field.
///
/// `subdivisions = 3` gives 642 vertices.
pub fn icosphere_blob(radius: f64, subdivisions: u32) -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
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
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
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
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts
        .into_iter()
        .map(|p| {
            let bump = 1.0 + 0.15 * (3.0 * p.x).sin() * (2.0 * p.y).cos() + 0.1 * (4.0 * p.z).sin();
            p * radius * bump
        })
        .collect();
    centered(verts, faces)
}

/// The three acceptance meshes: a tessellated cube, a bumpy icosphere and a
/// non-convex L-bracket, each 0.17–0.19 m across with 9 000–14 000 vertices.
///
/// The density matters: the inverse lookup only has entries for cells hit
/// by a vertex or a triangle barycenter, and at this resolution roughly half
/// of all UV cells are populated.
pub fn standard_meshes() -> Vec<(&'static str, Mesh)> {
    vec![
        ("cube", voxel_cube(0.1, 48)),
        ("blob", icosphere_blob(0.08, 5)),
        ("bracket", l_bracket(0.12, 0.07, 0.07, 0.0025)),
    ]
}

fn centered(mut vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Mesh {
    let c = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;
    for v in &mut vertices {
        *v -= c;
    }
    Mesh::new(vertices, triangles).expect("generated mesh is valid")
}
