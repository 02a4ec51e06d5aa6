//! Triangle meshes with oriented normals, mass properties and exact spatial queries.
//!
//! A [`TriangleMesh`] is immutable once built. Construction drops zero-area faces,
//! orients faces outward and derives two kinds of normals:
//!
//! * one smooth unit normal per vertex (weighted over all incident faces), and
//! * per-corner normals that only average across faces meeting at less than the crease
//!   angle, so that points on the interior of a flat face get exactly the face normal.
//!
//! Surface queries interpolate the corner normals barycentrically.

mod bvh;
mod io;
mod kdtree;
mod mass;
mod sampling;
pub mod shapes;

use std::collections::HashMap;

use nalgebra::{Isometry3, Point3, Vector3};
use thiserror::Error;

pub use self::io::{load_mesh, write_obj, write_ply, write_ply_points, LoadReport, MeshFormat};
pub use self::kdtree::{Neighbor, SpatialIndex};
pub use self::mass::{mass_properties, CentroidMethod, MassProperties};
pub use self::sampling::{farthest_point_sampling, sample_surface, SamplingParams};

use self::bvh::TriangleBvh;

/// Faces whose normals differ by more than this are not smoothed together.
pub const DEFAULT_CREASE_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("EmptyMesh: no valid faces")]
    EmptyMesh,
    #[error("KTooLarge: requested {k} neighbors but the index holds {available} points")]
    KTooLarge { k: usize, available: usize },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::from([f64::INFINITY; 3]),
            max: Point3::from([f64::NEG_INFINITY; 3]),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Point3<f64>, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        (0..3)
            .map(|i| {
                let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
                d * d
            })
            .sum()
    }
}

/// Nearest point on the mesh surface to some query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub distance: f64,
    pub face: usize,
    pub barycentric: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    vertex_normals: Vec<Vector3<f64>>,
    face_normals: Vec<Vector3<f64>>,
    corner_normals: Vec<[Vector3<f64>; 3]>,
    watertight: bool,
    degenerate_dropped: usize,
    crease_angle: f64,
    bvh: TriangleBvh,
    surface: Option<SpatialIndex>,
}

impl TriangleMesh {
    /// Builds a mesh from indexed triangles using the default crease angle.
    pub fn from_indexed(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        Self::with_crease_angle(vertices, faces, DEFAULT_CREASE_ANGLE)
    }

    pub fn with_crease_angle(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
        crease_angle: f64,
    ) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (face, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= count) {
                return Err(MeshError::IndexOutOfRange { face, index, count });
            }
        }

        let bounds = Aabb::from_points(&vertices);
        let scale = if bounds.diagonal().is_finite() && bounds.diagonal() > 0.0 {
            bounds.diagonal()
        } else {
            1.0
        };
        let area_eps = 1e-14 * scale * scale;

        let total = faces.len();
        let mut faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| {
                if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return false;
                }
                let [a, b, c] = f.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).norm() > area_eps
            })
            .collect();
        let degenerate_dropped = total - faces.len();
        if faces.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if degenerate_dropped > 0 {
            log::warn!("dropped {degenerate_dropped} zero-area faces");
        }

        let watertight = is_closed_manifold(&faces);
        orient_faces(&vertices, &mut faces, watertight, &bounds);

        let face_normals: Vec<Vector3<f64>> = faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| vertices[i]);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();
        let (vertex_normals, corner_normals) =
            compute_normals(&vertices, &faces, &face_normals, crease_angle);
        let bvh = TriangleBvh::build(&vertices, &faces);

        Ok(Self {
            vertices,
            faces,
            vertex_normals,
            face_normals,
            corner_normals,
            watertight,
            degenerate_dropped,
            crease_angle,
            bvh,
            surface: None,
        })
    }

    /// Attaches an area-uniform surface sample set (with normals) and its k-NN index.
    pub fn densified(mut self, params: &SamplingParams) -> Self {
        let (points, normals) = sample_surface(&self, params);
        self.surface = Some(SpatialIndex::new(points, normals));
        self
    }

    /// Applies a rigid transform to every geometric quantity, including the surface
    /// samples, without resampling.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let vertices = self.vertices.iter().map(|p| iso * p).collect();
        let mut out = Self::with_crease_angle(vertices, self.faces.clone(), self.crease_angle)
            .expect("rigid transform preserves face validity");
        out.degenerate_dropped = self.degenerate_dropped;
        out.surface = self.surface.as_ref().map(|s| {
            SpatialIndex::new(
                s.points().iter().map(|p| iso * p).collect(),
                s.normals().iter().map(|n| iso * n).collect(),
            )
        });
        out
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_normals(&self) -> &[Vector3<f64>] {
        &self.vertex_normals
    }

    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        self.face_normals[face]
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// Number of zero-area faces removed during construction.
    pub fn degenerate_dropped(&self) -> usize {
        self.degenerate_dropped
    }

    pub fn surface(&self) -> Option<&SpatialIndex> {
        self.surface.as_ref()
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.bounds()
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        let r = self.bounds().center();
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i] - r);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Unit normal at a point of `face` given by barycentric weights.
    pub fn normal_at(&self, face: usize, bary: [f64; 3]) -> Vector3<f64> {
        let c = &self.corner_normals[face];
        let n = c[0] * bary[0] + c[1] * bary[1] + c[2] * bary[2];
        let len = n.norm();
        if len > 1e-12 {
            n / len
        } else {
            self.face_normals[face]
        }
    }

    /// Globally nearest point on any triangle. Ties resolve to the lowest face index.
    pub fn closest_surface_point(&self, query: &Point3<f64>) -> SurfacePoint {
        let (face, point, bary, d2) = self.bvh.closest(&self.vertices, &self.faces, query);
        SurfacePoint {
            point,
            normal: self.normal_at(face, bary),
            distance: d2.sqrt(),
            face,
            barycentric: bary,
        }
    }

    /// Indices of faces whose bounding boxes overlap `region`, ascending.
    pub fn faces_in_region(&self, region: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        self.bvh.query_aabb(region, &mut out);
        out.sort_unstable();
        out
    }
}

fn is_closed_manifold(faces: &[[usize; 3]]) -> bool {
    let mut edges: HashMap<(usize, usize), (u32, i32)> = HashMap::new();
    for f in faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = edges.entry(key).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += if a < b { 1 } else { -1 };
        }
    }
    edges.values().all(|&(n, dir)| n == 2 && dir == 0)
}

/// Closed meshes get a global flip when their signed volume is negative; open meshes
/// have each face turned away from the bounding-box center.
fn orient_faces(vertices: &[Point3<f64>], faces: &mut [[usize; 3]], closed: bool, bounds: &Aabb) {
    let center = bounds.center();
    if closed {
        let volume: f64 = faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| vertices[i] - center);
                a.dot(&b.cross(&c))
            })
            .sum();
        if volume < 0.0 {
            for f in faces.iter_mut() {
                f.swap(1, 2);
            }
        }
    } else {
        for f in faces.iter_mut() {
            let [a, b, c] = f.map(|i| vertices[i]);
            let n = (b - a).cross(&(c - a));
            let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            if n.dot(&(centroid - center)) < 0.0 {
                f.swap(1, 2);
            }
        }
    }
}

/// Max's corner weight `|u × v| / (|u|²|v|²)`; exact for vertices on a sphere.
fn corner_weight(vertices: &[Point3<f64>], f: &[usize; 3], corner: usize) -> f64 {
    let p = vertices[f[corner]];
    let u = vertices[f[(corner + 1) % 3]] - p;
    let v = vertices[f[(corner + 2) % 3]] - p;
    u.cross(&v).norm() / (u.norm_squared() * v.norm_squared())
}

fn compute_normals(
    vertices: &[Point3<f64>],
    faces: &[[usize; 3]],
    face_normals: &[Vector3<f64>],
    crease_angle: f64,
) -> (Vec<Vector3<f64>>, Vec<[Vector3<f64>; 3]>) {
    // incident (face, weight) lists per vertex
    let mut incident: Vec<Vec<(usize, f64)>> = vec![Vec::new(); vertices.len()];
    for (fi, f) in faces.iter().enumerate() {
        for corner in 0..3 {
            incident[f[corner]].push((fi, corner_weight(vertices, f, corner)));
        }
    }

    let centroid = Point3::from(
        vertices.iter().map(|p| p.coords).sum::<Vector3<f64>>() / vertices.len().max(1) as f64,
    );
    let vertex_normals: Vec<Vector3<f64>> = incident
        .iter()
        .enumerate()
        .map(|(vi, inc)| {
            let n: Vector3<f64> = inc.iter().map(|&(f, w)| face_normals[f] * w).sum();
            if n.norm() > 1e-12 {
                n.normalize()
            } else {
                // isolated or cancelling vertex
                let radial = vertices[vi] - centroid;
                if radial.norm() > 1e-12 {
                    radial.normalize()
                } else {
                    Vector3::z()
                }
            }
        })
        .collect();

    let cos_crease = crease_angle.cos();
    let corner_normals = faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let nf = face_normals[fi];
            [0, 1, 2].map(|corner| {
                let n: Vector3<f64> = incident[f[corner]]
                    .iter()
                    .filter(|&&(g, _)| face_normals[g].dot(&nf) >= cos_crease)
                    .map(|&(g, w)| face_normals[g] * w)
                    .sum();
                if n.norm() > 1e-12 {
                    n.normalize()
                } else {
                    nf
                }
            })
        })
        .collect();

    (vertex_normals, corner_normals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inward_cube_is_flipped() {
        let cube = shapes::cuboid(Vector3::new(1.0, 1.0, 1.0), 1);
        let inverted: Vec<[usize; 3]> = cube.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let m = TriangleMesh::from_indexed(cube.vertices().to_vec(), inverted).unwrap();
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        for (v, n) in m.vertices().iter().zip(m.vertex_normals()) {
            assert!(v.coords.dot(n) > 0.0);
        }
    }

    #[test]
    fn open_mesh_faces_point_away_from_center() {
        // two triangles of the top face only, wound downward
        let vertices = vec![
            Point3::new(-1.0, -1.0, 1.0),
            Point3::new(1.0, -1.0, 1.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(-1.0, 1.0, 1.0),
            Point3::new(0.0, 0.0, -1.0),
        ];
        let faces = vec![[0, 2, 1], [0, 3, 2], [0, 1, 4]];
        let m = TriangleMesh::from_indexed(vertices, faces).unwrap();
        assert!(!m.is_watertight());
        assert!(m.face_normal(0).z > 0.99);
        assert!(m.face_normal(1).z > 0.99);
    }

    #[test]
    fn flat_face_interior_normal_is_exact() {
        let cube = shapes::cuboid(Vector3::new(1.0, 1.0, 1.0), 1);
        let q = Point3::new(0.31, -0.2, 2.0);
        let sp = cube.closest_surface_point(&q);
        assert!((sp.normal - Vector3::z()).norm() < 1e-15);
        assert!((sp.point - Point3::new(0.31, -0.2, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn all_degenerate_faces_is_empty_mesh() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            TriangleMesh::from_indexed(v, vec![[0, 1, 2]]),
            Err(MeshError::EmptyMesh)
        ));
    }

    #[test]
    fn bad_index_is_rejected() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            TriangleMesh::from_indexed(v, vec![[0, 1, 3]]),
            Err(MeshError::IndexOutOfRange { index: 3, .. })
        ));
    }

    #[test]
    fn closest_point_examples() {
        let cube = shapes::cuboid(Vector3::new(1.0, 1.0, 1.0), 1);
        let sp = cube.closest_surface_point(&Point3::new(0.0, 0.0, 2.0));
        assert!((sp.point - Point3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
        assert!((sp.distance - 1.5).abs() < 1e-15);
        for v in cube.vertices() {
            assert!(cube.closest_surface_point(v).distance < 1e-15);
        }
    }

    fn brute_force_distance(mesh: &TriangleMesh, q: &Point3<f64>) -> f64 {
        // per triangle: plane projection if it lands inside, else the nearest edge point
        (0..mesh.faces().len())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                let n = (b - a).cross(&(c - a)).normalize();
                let proj = q - n * n.dot(&(q - a));
                let inside = |p: &Point3<f64>| {
                    let s1 = (b - a).cross(&(p - a)).dot(&n);
                    let s2 = (c - b).cross(&(p - b)).dot(&n);
                    let s3 = (a - c).cross(&(p - c)).dot(&n);
                    s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0
                };
                if inside(&proj) {
                    return (q - proj).norm();
                }
                let seg = |u: Point3<f64>, v: Point3<f64>| {
                    let t = ((q - u).dot(&(v - u)) / (v - u).norm_squared()).clamp(0.0, 1.0);
                    (q - (u + (v - u) * t)).norm()
                };
                seg(a, b).min(seg(b, c)).min(seg(c, a))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closest_point_matches_per_triangle_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for mesh in [shapes::icosphere(0.03, 3), shapes::l_prism(0.05), shapes::cylinder(0.02, 0.1, 24)] {
            let b = mesh.bounds();
            for _ in 0..100 {
                let q = Point3::new(
                    rng.random_range(b.min.x - 0.05..b.max.x + 0.05),
                    rng.random_range(b.min.y - 0.05..b.max.y + 0.05),
                    rng.random_range(b.min.z - 0.05..b.max.z + 0.05),
                );
                let sp = mesh.closest_surface_point(&q);
                assert!((sp.distance - brute_force_distance(&mesh, &q)).abs() < 1e-9);
                assert!((sp.normal.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn closest_distance_bounds_sample_distances() {
        let sphere = shapes::icosphere(0.03, 2).densified(&SamplingParams::default());
        let q = Point3::new(0.01, 0.05, -0.02);
        let d = sphere.closest_surface_point(&q).distance;
        assert!(sphere.surface().unwrap().points().iter().all(|p| (p - q).norm() >= d - 1e-12));
    }
}
