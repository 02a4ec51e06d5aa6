//! Parallel-jaw gripper geometry and contact resolution.
//!
//! Gripper frame convention: `x` is the approach axis (pointing into the object), `y` is
//! the closing axis (left finger on `-y`, right finger on `+y`) and `z = x × y`. The pose
//! translation is the grasp center. Each finger spans `x ∈ [depth − finger_length, depth]`,
//! so the fingertips sit `depth` past the grasp center along the approach axis.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Aabb, SpatialIndex, TriangleMesh};

/// Absolute tolerance (meters) used for tie detection along the closing axis.
const CONTACT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GripperError {
    #[error("rotation is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("width {0} is outside (0, max_width]")]
    InvalidWidth(f64),
    #[error("depth {0} is not a configured depth level")]
    InvalidDepth(f64),
    #[error("invalid gripper model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub depth_levels: Vec<f64>,
    /// Inflation applied to every collision box.
    pub collision_margin: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_width: 0.085,
            finger_length: 0.06,
            finger_thickness: 0.01,
            depth_levels: vec![0.01, 0.02, 0.03, 0.04],
            collision_margin: 0.001,
        }
    }
}

/// Box aligned with the gripper frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBox {
    pub center: Point3<f64>,
    pub half_extents: Vector3<f64>,
}

impl GripperBox {
    fn from_bounds(min: [f64; 3], max: [f64; 3]) -> Self {
        let min = Vector3::from(min);
        let max = Vector3::from(max);
        Self {
            center: Point3::from((min + max) * 0.5),
            half_extents: (max - min) * 0.5,
        }
    }

    pub fn contains_local(&self, p: &Point3<f64>, margin: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|i| d[i].abs() <= self.half_extents[i] + margin)
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GripperError> {
        let bad = |m: &str| Err(GripperError::InvalidModel(m.to_string()));
        if !(self.max_width > 0.0) {
            return bad("max_width must be positive");
        }
        if !(self.finger_length > 0.0) || !(self.finger_thickness > 0.0) {
            return bad("finger dimensions must be positive");
        }
        if self.depth_levels.is_empty() {
            return bad("at least one depth level is required");
        }
        if self.depth_levels.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("depth levels must be strictly increasing");
        }
        if self.depth_levels.iter().any(|&d| !(d > 0.0 && d <= self.finger_length)) {
            return bad("depth levels must lie in (0, finger_length]");
        }
        if !(self.collision_margin >= 0.0) {
            return bad("collision margin must be non-negative");
        }
        Ok(())
    }

    /// Width and depth invariants of a pose against this gripper.
    pub fn check_pose(&self, pose: &GraspPose) -> Result<(), GripperError> {
        if !(pose.width > 0.0 && pose.width <= self.max_width + 1e-12) {
            return Err(GripperError::InvalidWidth(pose.width));
        }
        if !self.depth_levels.iter().any(|&d| (d - pose.depth).abs() <= 1e-9) {
            return Err(GripperError::InvalidDepth(pose.depth));
        }
        Ok(())
    }

    /// Left finger, right finger and palm, in the gripper frame, for an open width.
    pub fn collision_body(&self, width: f64, depth: f64) -> [GripperBox; 3] {
        let (l, t, h) = (self.finger_length, self.finger_thickness, width / 2.0);
        let base = depth - l;
        [
            GripperBox::from_bounds([base, -h - t, -t / 2.0], [depth, -h, t / 2.0]),
            GripperBox::from_bounds([base, h, -t / 2.0], [depth, h + t, t / 2.0]),
            GripperBox::from_bounds([base - t, -h - t, -t / 2.0], [base, h + t, t / 2.0]),
        ]
    }
}

/// 6-DoF parallel-jaw grasp: rotation (gripper → world), grasp center, opening width and
/// approach depth, all in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub rotation: Rotation3<f64>,
    pub translation: Point3<f64>,
    pub width: f64,
    pub depth: f64,
}

impl GraspPose {
    /// Validates the rotation (orthonormal, det +1, within 1e-6) and positivity of width
    /// and depth.
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Point3<f64>,
        width: f64,
        depth: f64,
    ) -> Result<Self, GripperError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !rotation.iter().all(|v| v.is_finite())
            || !(ortho <= 1e-6)
            || !((rotation.determinant() - 1.0).abs() <= 1e-6)
        {
            return Err(GripperError::InvalidRotation);
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(GripperError::InvalidWidth(width));
        }
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(GripperError::InvalidDepth(depth));
        }
        if !translation.coords.iter().all(|v| v.is_finite()) {
            return Err(GripperError::InvalidRotation);
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
            width,
            depth,
        })
    }

    pub fn approach(&self) -> Vector3<f64> {
        self.rotation.matrix().column(0).into()
    }

    pub fn closing(&self) -> Vector3<f64> {
        self.rotation.matrix().column(1).into()
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.inverse_transform_vector(&(p - self.translation)))
    }

    pub fn to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.translation + self.rotation * p.coords
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let r = iso.rotation.to_rotation_matrix() * self.rotation;
        Self {
            rotation: r,
            translation: iso * self.translation,
            ..*self
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.translation.coords),
            UnitQuaternion::from_rotation_matrix(&self.rotation),
        )
    }

    /// Geodesic angle between two rotations, radians.
    pub fn rotation_distance(&self, other: &GraspPose) -> f64 {
        let r = self.rotation.matrix().transpose() * other.rotation.matrix();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Resolved two-finger contact geometry for one grasp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactFrame {
    pub p_cl: Point3<f64>,
    pub p_cr: Point3<f64>,
    pub p_el: Point3<f64>,
    pub p_er: Point3<f64>,
    pub v_ql: Vector3<f64>,
    pub v_qr: Vector3<f64>,
    pub v_a: Vector3<f64>,
    pub valid: bool,
}

impl ContactFrame {
    fn invalid(grasp: &GraspPose) -> Self {
        let c = grasp.closing();
        Self {
            p_cl: grasp.translation,
            p_cr: grasp.translation,
            p_el: grasp.translation,
            p_er: grasp.translation,
            v_ql: -c,
            v_qr: c,
            v_a: c,
            valid: false,
        }
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            p_cl: iso * self.p_cl,
            p_cr: iso * self.p_cr,
            p_el: iso * self.p_el,
            p_er: iso * self.p_er,
            v_ql: iso * self.v_ql,
            v_qr: iso * self.v_qr,
            v_a: iso * self.v_a,
            valid: self.valid,
        }
    }
}

/// A piece of the mesh cross-section in the gripper's `z = 0` plane, stored as two
/// endpoints in local `(x, y)` with their barycentric coordinates on `face`.
#[derive(Debug, Clone, Copy)]
struct Slice {
    face: usize,
    a: [f64; 2],
    b: [f64; 2],
    ba: [f64; 3],
    bb: [f64; 3],
}

impl Slice {
    fn at(&self, s: f64) -> ([f64; 2], [f64; 3]) {
        let lerp = |u: f64, v: f64| u + (v - u) * s;
        (
            [lerp(self.a[0], self.b[0]), lerp(self.a[1], self.b[1])],
            [lerp(self.ba[0], self.bb[0]), lerp(self.ba[1], self.bb[1]), lerp(self.ba[2], self.bb[2])],
        )
    }

    /// Parameter range where `lo <= coord(axis) <= hi`, if any.
    fn clip_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let (u, v) = (self.a[axis], self.b[axis]);
        if u == v {
            return (u >= lo && u <= hi).then_some((0.0, 1.0));
        }
        let s_lo = (lo - u) / (v - u);
        let s_hi = (hi - u) / (v - u);
        let (s0, s1) = (s_lo.min(s_hi).max(0.0), s_lo.max(s_hi).min(1.0));
        (s0 <= s1).then_some((s0, s1))
    }

    fn sub(&self, s0: f64, s1: f64) -> Slice {
        let (a, ba) = self.at(s0);
        let (b, bb) = self.at(s1);
        Slice { face: self.face, a, b, ba, bb }
    }
}

fn slice_face(face: usize, local: &[Point3<f64>; 3]) -> Vec<Slice> {
    let z = [local[0].z, local[1].z, local[2].z];
    let unit = |i: usize| {
        let mut b = [0.0; 3];
        b[i] = 1.0;
        b
    };
    let xy = |p: &Point3<f64>| [p.x, p.y];
    if z.iter().all(|&v| v == 0.0) {
        // coplanar: the section is the whole triangle; its y-extremes are on the edges
        return (0..3)
            .map(|i| {
                let j = (i + 1) % 3;
                Slice { face, a: xy(&local[i]), b: xy(&local[j]), ba: unit(i), bb: unit(j) }
            })
            .collect();
    }
    let mut pts: Vec<([f64; 2], [f64; 3])> = Vec::with_capacity(3);
    for i in 0..3 {
        if z[i] == 0.0 {
            pts.push((xy(&local[i]), unit(i)));
        }
    }
    for i in 0..3 {
        let j = (i + 1) % 3;
        if (z[i] < 0.0 && z[j] > 0.0) || (z[i] > 0.0 && z[j] < 0.0) {
            let s = z[i] / (z[i] - z[j]);
            let p = local[i] + (local[j] - local[i]) * s;
            let mut bary = [0.0; 3];
            bary[i] = 1.0 - s;
            bary[j] = s;
            pts.push(([p.x, p.y], bary));
        }
    }
    match pts.len() {
        0 => Vec::new(),
        1 => vec![Slice { face, a: pts[0].0, b: pts[0].0, ba: pts[0].1, bb: pts[0].1 }],
        _ => vec![Slice { face, a: pts[0].0, b: pts[1].0, ba: pts[0].1, bb: pts[1].1 }],
    }
}

/// Contact selected on one side of the section.
struct Touch {
    face: usize,
    xy: [f64; 2],
    bary: [f64; 3],
}

/// First contact for a finger sweeping toward `+y` (`side = 1.0`, left finger) or `-y`
/// (`side = -1.0`, right finger). Among tied extreme points the one closest to the middle
/// of the tied span along the finger is used.
fn extreme_contact(slices: &[Slice], side: f64) -> Option<Touch> {
    // work with s·y so that both fingers minimise
    let key = |p: &[f64; 2]| side * p[1];
    let best = slices
        .iter()
        .flat_map(|s| [key(&s.a), key(&s.b)])
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let limit = best + CONTACT_TOL;

    let mut ties: Vec<Slice> = Vec::new();
    for s in slices {
        let (ka, kb) = (key(&s.a), key(&s.b));
        let range = if ka == kb {
            (ka <= limit).then_some((0.0, 1.0))
        } else {
            let t = (limit - ka) / (kb - ka);
            if ka < kb {
                (ka <= limit).then_some((0.0, t.min(1.0)))
            } else {
                (kb <= limit).then_some((t.max(0.0), 1.0))
            }
        };
        if let Some((s0, s1)) = range {
            ties.push(s.sub(s0, s1));
        }
    }
    let lo = ties.iter().map(|s| s.a[0].min(s.b[0])).fold(f64::INFINITY, f64::min);
    let hi = ties.iter().map(|s| s.a[0].max(s.b[0])).fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);

    let mut chosen: Option<(f64, Touch)> = None;
    for s in &ties {
        let param = if s.a[0] == s.b[0] {
            if key(&s.a) <= key(&s.b) { 0.0 } else { 1.0 }
        } else {
            ((mid - s.a[0]) / (s.b[0] - s.a[0])).clamp(0.0, 1.0)
        };
        let (xy, bary) = s.at(param);
        let gap = (xy[0] - mid).abs();
        let better = match &chosen {
            None => true,
            Some((g, t)) => gap < *g || (gap == *g && s.face < t.face),
        };
        if better {
            chosen = Some((gap, Touch { face: s.face, xy, bary }));
        }
    }
    chosen.map(|(_, t)| t)
}

/// Resolves the contact frame of `grasp` on `mesh`.
///
/// Each finger's inner-face centerline (the segment `x ∈ [depth − finger_length, depth]`,
/// `z = 0`) is swept along the closing axis from its open position; the first mesh point
/// it meets is the contact. The frame is invalid when either sweep meets nothing, when a
/// finger starts inside material, or when the contacts coincide.
pub fn resolve_contacts(mesh: &TriangleMesh, grasp: &GraspPose, gripper: &GripperModel) -> ContactFrame {
    let half = grasp.width / 2.0;
    let x0 = grasp.depth - gripper.finger_length;
    let x1 = grasp.depth;

    let mut region = Aabb::empty();
    for x in [x0, x1] {
        for y in [-half, half] {
            region.grow(&grasp.to_world(&Point3::new(x, y, 0.0)));
        }
    }
    let pad = Vector3::repeat(1e-7);
    region.min -= pad;
    region.max += pad;

    let mut slices = Vec::new();
    for face in mesh.faces_in_region(&region) {
        let local = mesh.triangle(face).map(|p| grasp.to_local(&p));
        for s in slice_face(face, &local) {
            if let Some((s0, s1)) = s.clip_range(0, x0, x1) {
                slices.push(s.sub(s0, s1));
            }
        }
    }

    let mut inside = Vec::with_capacity(slices.len());
    for s in &slices {
        let (ylo, yhi) = (s.a[1].min(s.b[1]), s.a[1].max(s.b[1]));
        // material straddling a finger's open position
        let straddles = |y: f64| ylo < y - CONTACT_TOL && yhi > y + CONTACT_TOL;
        if straddles(-half) || straddles(half) {
            return ContactFrame::invalid(grasp);
        }
        if let Some((s0, s1)) = s.clip_range(1, -half, half) {
            inside.push(s.sub(s0, s1));
        }
    }

    let (Some(left), Some(right)) = (extreme_contact(&inside, 1.0), extreme_contact(&inside, -1.0))
    else {
        return ContactFrame::invalid(grasp);
    };

    // a finger whose first contact faces away from it started inside the object
    let local_normal = |face: usize| grasp.rotation.inverse_transform_vector(&mesh.face_normal(face));
    if local_normal(left.face).y > 1e-9 || local_normal(right.face).y < -1e-9 {
        return ContactFrame::invalid(grasp);
    }

    let on_surface = |t: &Touch| {
        let [a, b, c] = mesh.triangle(t.face);
        Point3::from(a.coords * t.bary[0] + b.coords * t.bary[1] + c.coords * t.bary[2])
    };
    let p_cl = on_surface(&left);
    let p_cr = on_surface(&right);
    let span = p_cr - p_cl;
    if span.norm() <= CONTACT_TOL || span.norm() > gripper.max_width + 1e-9 {
        return ContactFrame::invalid(grasp);
    }

    ContactFrame {
        p_cl,
        p_cr,
        p_el: grasp.to_world(&Point3::new(x1, left.xy[1], 0.0)),
        p_er: grasp.to_world(&Point3::new(x1, right.xy[1], 0.0)),
        v_ql: mesh.normal_at(left.face, left.bary),
        v_qr: mesh.normal_at(right.face, right.bary),
        v_a: span.normalize(),
        valid: true,
    }
}

/// True iff any point lies inside an inflated collision box of the open gripper.
pub fn gripper_collides(
    scene_points: &[Point3<f64>],
    grasp: &GraspPose,
    gripper: &GripperModel,
) -> bool {
    let body = gripper.collision_body(grasp.width, grasp.depth);
    let margin = gripper.collision_margin;
    scene_points.iter().any(|p| {
        let local = grasp.to_local(p);
        body.iter().any(|b| b.contains_local(&local, margin))
    })
}

/// Same test as [`gripper_collides`], restricted to index points near the gripper.
pub fn gripper_collides_indexed(
    index: &SpatialIndex,
    grasp: &GraspPose,
    gripper: &GripperModel,
) -> bool {
    let body = gripper.collision_body(grasp.width, grasp.depth);
    let margin = gripper.collision_margin;
    let r = grasp.rotation.matrix();
    body.iter().any(|b| {
        let e = b.half_extents.add_scalar(margin);
        let center = grasp.to_world(&b.center);
        // world half extents of the rotated box, padded against rounding in to_local
        let w = r.abs() * e + Vector3::repeat(1e-12);
        index.any_in_box(&(center - w), &(center + w), |i| b.contains_local(&grasp.to_local(&index.points()[i]), margin))
    })
}
