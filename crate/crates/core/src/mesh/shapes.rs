//! Closed, consistently wound primitive meshes.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;

/// Axis-aligned box centered at the origin; each face is an `s × s` grid of quads.
pub fn cuboid(size: Vector3<f64>, subdivisions: usize) -> TriangleMesh {
    let s = subdivisions.max(1);
    let mut lookup: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vertex = |key: [usize; 3], vertices: &mut Vec<Point3<f64>>| -> usize {
        *lookup.entry(key).or_insert_with(|| {
            let p = Point3::from(Vector3::from_fn(|i, _| {
                (key[i] as f64 / s as f64 - 0.5) * size[i]
            }));
            vertices.push(p);
            vertices.len() - 1
        })
    };

    for axis in 0..3 {
        for positive in [false, true] {
            // (u, v) with u × v pointing outward
            let (u, v) = if positive {
                ((axis + 1) % 3, (axis + 2) % 3)
            } else {
                ((axis + 2) % 3, (axis + 1) % 3)
            };
            let fixed = if positive { s } else { 0 };
            let key = |i: usize, j: usize| {
                let mut k = [0usize; 3];
                k[axis] = fixed;
                k[u] = i;
                k[v] = j;
                k
            };
            for i in 0..s {
                for j in 0..s {
                    let a = vertex(key(i, j), &mut vertices);
                    let b = vertex(key(i + 1, j), &mut vertices);
                    let c = vertex(key(i + 1, j + 1), &mut vertices);
                    let d = vertex(key(i, j + 1), &mut vertices);
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
        }
    }
    TriangleMesh::from_indexed(vertices, faces).expect("cuboid is valid")
}

/// Subdivided icosahedron projected onto a sphere. `subdivisions = 3` gives 642 vertices.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    let vertices = vertices.into_iter().map(|v| Point3::from(v * radius)).collect();
    TriangleMesh::from_indexed(vertices, faces).expect("icosphere is valid")
}

/// Capped cylinder along z, centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let n = segments.max(3);
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for z in [-h, h] {
        for i in 0..n {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Point3::new(0.0, 0.0, -h));
    let top = vertices.len();
    vertices.push(Point3::new(0.0, 0.0, h));

    let mut faces = Vec::with_capacity(4 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, n + j]);
        faces.push([i, n + j, n + i]);
        faces.push([bottom, j, i]);
        faces.push([top, n + i, n + j]);
    }
    TriangleMesh::from_indexed(vertices, faces).expect("cylinder is valid")
}

/// L-shaped prism: the union of `[0,1]³` and `[1,2]×[0,1]×[0,2]`, scaled by `scale`.
pub fn l_prism(scale: f64) -> TriangleMesh {
    // outline in the (x, z) plane, counter-clockwise
    let outline = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 2.0), (1.0, 1.0), (0.0, 1.0)];
    let cap = [[0, 1, 5], [0, 5, 6], [2, 3, 4], [2, 4, 5], [2, 5, 1]];
    let n = outline.len();

    let mut vertices = Vec::with_capacity(2 * n);
    for y in [0.0, 1.0] {
        for &(x, z) in &outline {
            vertices.push(Point3::new(x * scale, y * scale, z * scale));
        }
    }
    let mut faces = Vec::new();
    for t in cap {
        faces.push(t);
        faces.push([n + t[0], n + t[2], n + t[1]]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([j, i, n + i]);
        faces.push([j, n + i, n + j]);
    }
    TriangleMesh::from_indexed(vertices, faces).expect("prism is valid")
}

/// Thin square plate in the xy-plane.
pub fn plate(side: f64, thickness: f64) -> TriangleMesh {
    cuboid(Vector3::new(side, side, thickness), 1)
}
