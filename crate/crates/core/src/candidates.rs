//! Dense grasp-candidate grid: seed points × approach views × in-plane angles × depths.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gripper::{gripper_collides_indexed, resolve_contacts, ContactFrame, GraspPose, GripperModel};
use crate::mesh::{farthest_point_sampling, TriangleMesh};

/// Clearance added to the contact separation when setting the grasp width.
pub const WIDTH_CLEARANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// N: farthest-point seeds drawn from the surface samples.
    pub num_seeds: usize,
    /// V: approach views on the unit sphere.
    pub num_views: usize,
    /// A: in-plane rotations over a half turn.
    pub num_angles: usize,
    /// Drop candidates whose open gripper intersects the object's own surface samples.
    pub self_collision: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { num_seeds: 256, num_views: 300, num_angles: 12, self_collision: true }
    }
}

/// `v` directions on a Fibonacci spiral, from the north pole region downward.
pub fn generate_views(v: usize) -> Vec<Vector3<f64>> {
    if v <= 1 {
        return vec![Vector3::z(); v];
    }
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..v)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / v as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// `A` in-plane angles `kπ/A`.
pub fn generate_rotations(a: usize) -> Vec<f64> {
    (0..a).map(|k| k as f64 * PI / a as f64).collect()
}

/// Rotation whose approach axis is `-view`, with the closing axis turned by `angle` about
/// the approach from the fixed reference `(-a_y, a_x, 0)` (or `+y` when the approach is
/// vertical).
pub fn view_rotation(view: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let approach = -view.normalize();
    let reference = Vector3::new(-approach.y, approach.x, 0.0);
    let reference = if reference.norm() < 1e-9 { Vector3::y() } else { reference.normalize() };
    let side = approach.cross(&reference);
    let closing = reference * angle.cos() + side * angle.sin();
    Matrix3::from_columns(&[approach, closing, approach.cross(&closing)])
}

/// Position of one candidate in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub seed: usize,
    pub view: usize,
    pub angle: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub seed_points: Vec<Point3<f64>>,
    pub views: Vec<Vector3<f64>>,
    pub rotations: Vec<f64>,
    pub depths: Vec<f64>,
}

impl CandidateGrid {
    /// Seeds by farthest-point sampling of the mesh's surface samples (vertices when the
    /// mesh has not been densified).
    pub fn new(mesh: &TriangleMesh, params: &GridParams, gripper: &GripperModel) -> Self {
        let cloud = mesh.surface().map(|s| s.points()).unwrap_or(mesh.vertices());
        let seed_points = farthest_point_sampling(cloud, params.num_seeds)
            .into_iter()
            .map(|i| cloud[i])
            .collect();
        Self {
            seed_points,
            views: generate_views(params.num_views),
            rotations: generate_rotations(params.num_angles),
            depths: gripper.depth_levels.clone(),
        }
    }

    /// Upper bound on the number of candidates, N×V×A×D.
    pub fn len(&self) -> usize {
        self.seed_points.len() * self.views.len() * self.rotations.len() * self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pose(&self, idx: GridIndex, width: f64) -> GraspPose {
        let r = view_rotation(&self.views[idx.view], self.rotations[idx.angle]);
        GraspPose::new(r, self.seed_points[idx.seed], width, self.depths[idx.depth])
            .expect("grid rotations are orthonormal")
    }

    fn indices_for_seed(&self, seed: usize) -> impl Iterator<Item = GridIndex> + '_ {
        let (nv, na, nd) = (self.views.len(), self.rotations.len(), self.depths.len());
        (0..nv).flat_map(move |view| {
            (0..na).flat_map(move |angle| (0..nd).map(move |depth| GridIndex { seed, view, angle, depth }))
        })
    }

    /// Every grid index in seed-major order.
    pub fn indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (0..self.seed_points.len()).flat_map(move |s| self.indices_for_seed(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: GridIndex,
    pub pose: GraspPose,
    pub frame: ContactFrame,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumerationStats {
    pub attempted: usize,
    pub invalid_contacts: usize,
    pub self_collisions: usize,
    pub yielded: usize,
}

impl EnumerationStats {
    fn merge(mut self, other: Self) -> Self {
        self.attempted += other.attempted;
        self.invalid_contacts += other.invalid_contacts;
        self.self_collisions += other.self_collisions;
        self.yielded += other.yielded;
        self
    }
}

enum Outcome {
    Invalid,
    Collides,
    Valid(Candidate),
}

fn evaluate(
    mesh: &TriangleMesh,
    grid: &CandidateGrid,
    gripper: &GripperModel,
    self_collision: bool,
    idx: GridIndex,
) -> Outcome {
    let probe = grid.pose(idx, gripper.max_width);
    let frame = resolve_contacts(mesh, &probe, gripper);
    if !frame.valid {
        return Outcome::Invalid;
    }
    let width = ((frame.p_cr - frame.p_cl).norm() + WIDTH_CLEARANCE).min(gripper.max_width);
    let pose = GraspPose { width, ..probe };
    if self_collision {
        if let Some(index) = mesh.surface() {
            if gripper_collides_indexed(index, &pose, gripper) {
                return Outcome::Collides;
            }
        }
    }
    Outcome::Valid(Candidate { index: idx, pose, frame })
}

/// Lazily walks the grid and yields only candidates with a valid contact frame.
///
/// The contacts are resolved with the gripper fully open; the yielded pose has its width
/// narrowed to the contact separation plus [`WIDTH_CLEARANCE`] (capped at `max_width`).
/// Narrowing cannot change the contacts since no material lies outside them inside the
/// finger sweep.
pub fn enumerate_candidates<'a>(
    mesh: &'a TriangleMesh,
    grid: &'a CandidateGrid,
    gripper: &'a GripperModel,
    self_collision: bool,
) -> impl Iterator<Item = Candidate> + 'a {
    grid.indices().filter_map(move |idx| match evaluate(mesh, grid, gripper, self_collision, idx) {
        Outcome::Valid(c) => Some(c),
        _ => None,
    })
}

/// Parallel over seeds; output order equals [`enumerate_candidates`].
pub fn enumerate_candidates_par(
    mesh: &TriangleMesh,
    grid: &CandidateGrid,
    gripper: &GripperModel,
    self_collision: bool,
) -> (Vec<Candidate>, EnumerationStats) {
    let per_seed: Vec<(Vec<Candidate>, EnumerationStats)> = (0..grid.seed_points.len())
        .into_par_iter()
        .map(|seed| {
            let mut out = Vec::new();
            let mut stats = EnumerationStats::default();
            for idx in grid.indices_for_seed(seed) {
                stats.attempted += 1;
                match evaluate(mesh, grid, gripper, self_collision, idx) {
                    Outcome::Invalid => stats.invalid_contacts += 1,
                    Outcome::Collides => stats.self_collisions += 1,
                    Outcome::Valid(c) => {
                        stats.yielded += 1;
                        out.push(c);
                    }
                }
            }
            (out, stats)
        })
        .collect();
    let mut all = Vec::new();
    let mut stats = EnumerationStats::default();
    for (cands, s) in per_seed {
        all.extend(cands);
        stats = stats.merge(s);
    }
    (all, stats)
}
