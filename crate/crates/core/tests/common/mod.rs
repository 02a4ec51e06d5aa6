//! Fixtures shared by the integration tests: a 3x3 grid of 5 cm cubes resting on the
//! table, grasps that close across cube faces, and grasps far above the scene.

#![allow(dead_code)]

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

use grasp_score::eval::PredictedGrasp;
use grasp_score::gripper::GraspPose;
use grasp_score::scene::{InstanceRecord, SceneFile};

pub const CUBE_SIDE: f64 = 0.05;

pub fn cube_centers(table_height: f64) -> Vec<Point3<f64>> {
    (0..9).map(|i| Point3::new(0.12 * (i % 3) as f64, 0.12 * (i / 3) as f64, table_height + 0.5 * CUBE_SIDE)).collect()
}

pub fn cube_scene_file(object_id: &str, table_height: f64) -> SceneFile {
    SceneFile {
        instances: cube_centers(table_height)
            .iter()
            .map(|c| InstanceRecord {
                object_id: object_id.into(),
                rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                translation: [c.x, c.y, c.z],
            })
            .collect(),
        table_height,
    }
}

/// Six grasps per cube closing across a pair of faces, approaching from above and tilted
/// by -40°, 0° or 40° about the closing axis; no two are within 30° of each other.
pub fn side_grasps(centers: &[Point3<f64>]) -> Vec<GraspPose> {
    let mut out = Vec::new();
    for c in centers {
        for closing in [Vector3::x(), Vector3::y()] {
            for tilt in [-40f64, 0.0, 40.0] {
                let a = Rotation3::from_axis_angle(&Unit::new_normalize(closing), tilt.to_radians()) * -Vector3::z();
                let r = Matrix3::from_columns(&[a, closing, a.cross(&closing)]);
                out.push(GraspPose::new(r, *c, 0.06, 0.02).expect("valid side grasp"));
            }
        }
    }
    out
}

/// Grasps 60 cm above the table on a 5 cm grid, touching nothing.
pub fn free_air_grasps(n: usize) -> Vec<GraspPose> {
    let r = Matrix3::from_columns(&[-Vector3::z(), Vector3::x(), -Vector3::y()]);
    (0..n)
        .map(|i| GraspPose::new(r, Point3::new(0.05 * (i % 10) as f64, 0.05 * (i / 10) as f64, 0.6), 0.06, 0.02).unwrap())
        .collect()
}

/// Predicted scores strictly decreasing in list order.
pub fn ranked(grasps: &[GraspPose]) -> Vec<PredictedGrasp> {
    grasps
        .iter()
        .enumerate()
        .map(|(i, g)| PredictedGrasp { grasp: *g, predicted_score: 1.0 - 0.01 * i as f64, object_id: None })
        .collect()
}

/// (1/50) Σ_{k=1..50} min(k, 25)/k: AP of 25 hits followed by 25 misses.
pub fn summed_oracle() -> f64 {
    (1..=50).map(|k: usize| k.min(25) as f64 / k as f64).sum::<f64>() / 50.0
}
