//! Object library and multi-object table scenes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Aabb, MassProperties, SpatialIndex, TriangleMesh};
use crate::metrics::NormalizationBounds;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("UnknownObjectId: {0}")]
    UnknownObjectId(String),
    #[error("instance {0}: rotation is not orthonormal with determinant +1")]
    InvalidPose(usize),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("ParseError: {0}")]
    Json(#[from] serde_json::Error),
}

/// A densified object mesh with its mass properties and the `s_g_raw` / `s_c_raw`
/// ranges of its candidate set.
#[derive(Debug, Clone)]
pub struct LibraryObject {
    pub mesh: TriangleMesh,
    pub mass: MassProperties,
    pub bounds: NormalizationBounds,
}

#[derive(Debug, Clone, Default)]
pub struct ObjectLibrary {
    objects: BTreeMap<String, LibraryObject>,
}

impl ObjectLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, object: LibraryObject) {
        self.objects.insert(id.into(), object);
    }

    pub fn get(&self, id: &str) -> Result<&LibraryObject, SceneError> {
        self.objects.get(id).ok_or_else(|| SceneError::UnknownObjectId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.objects.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }
}

/// On-disk form of one posed instance: row-major rotation and translation in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub object_id: String,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

/// JSON scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub instances: Vec<InstanceRecord>,
    pub table_height: f64,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self, SceneError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn instances(&self) -> Result<Vec<SceneInstance>, SceneError> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let r = Matrix3::from_fn(|row, col| rec.rotation[row][col]);
                let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
                if !(ortho <= 1e-6 && (r.determinant() - 1.0).abs() <= 1e-6) || !rec.translation.iter().all(|v| v.is_finite()) {
                    return Err(SceneError::InvalidPose(i));
                }
                let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
                let t = Translation3::new(rec.translation[0], rec.translation[1], rec.translation[2]);
                Ok(SceneInstance { object_id: rec.object_id.clone(), pose: Isometry3::from_parts(t, rot) })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub object_id: String,
    /// Object → world.
    pub pose: Isometry3<f64>,
}

impl SceneInstance {
    fn record(&self) -> InstanceRecord {
        let r = self.pose.rotation.to_rotation_matrix();
        let m = r.matrix();
        let t = self.pose.translation.vector;
        InstanceRecord {
            object_id: self.object_id.clone(),
            rotation: [0, 1, 2].map(|row| [0, 1, 2].map(|col| m[(row, col)])),
            translation: [t.x, t.y, t.z],
        }
    }
}

/// Table points: a square grid at `table_height` under the objects, extending `margin`
/// past their footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableParams {
    pub margin: f64,
    pub spacing: f64,
}

impl Default for TableParams {
    fn default() -> Self {
        Self { margin: 0.1, spacing: 0.005 }
    }
}

#[derive(Debug, Clone)]
pub struct SceneLayout {
    pub instances: Vec<SceneInstance>,
    pub table_height: f64,
    /// Surface samples of every instance plus the table grid, world frame.
    pub scene_cloud: SpatialIndex,
}

impl SceneLayout {
    pub fn compose(file: &SceneFile, library: &ObjectLibrary, table: &TableParams) -> Result<Self, SceneError> {
        let instances = file.instances()?;
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut footprint = Aabb::empty();
        for inst in &instances {
            let obj = library.get(&inst.object_id)?;
            for p in obj.mesh.vertices() {
                footprint.grow(&(inst.pose * p));
            }
            if let Some(s) = obj.mesh.surface() {
                points.extend(s.points().iter().map(|p| inst.pose * p));
                normals.extend(s.normals().iter().map(|n| inst.pose * n));
            }
        }
        if !instances.is_empty() && table.spacing > 0.0 {
            let (x0, x1) = (footprint.min.x - table.margin, footprint.max.x + table.margin);
            let (y0, y1) = (footprint.min.y - table.margin, footprint.max.y + table.margin);
            let nx = ((x1 - x0) / table.spacing).floor() as usize + 1;
            let ny = ((y1 - y0) / table.spacing).floor() as usize + 1;
            for i in 0..nx {
                for j in 0..ny {
                    let x = x0 + i as f64 * table.spacing;
                    let y = y0 + j as f64 * table.spacing;
                    points.push(Point3::new(x, y, file.table_height));
                    normals.push(Vector3::z());
                }
            }
        }
        Ok(Self { instances, table_height: file.table_height, scene_cloud: SpatialIndex::new(points, normals) })
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile { instances: self.instances.iter().map(SceneInstance::record).collect(), table_height: self.table_height }
    }
}

/// Places objects in a row along `x` on the table, each resting on it with a random yaw
/// and `gap` meters between neighboring footprints.
pub fn place_on_table(
    ids: &[String],
    library: &ObjectLibrary,
    table_height: f64,
    gap: f64,
    seed: u64,
) -> Result<SceneFile, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursor = 0.0;
    let mut instances = Vec::with_capacity(ids.len());
    for id in ids {
        let obj = library.get(id)?;
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let rotated = Aabb::from_points(&obj.mesh.vertices().iter().map(|p| rot * p).collect::<Vec<_>>());
        let shift = Vector3::new(
            cursor - rotated.min.x,
            -0.5 * (rotated.min.y + rotated.max.y),
            table_height - rotated.min.z,
        );
        cursor += rotated.max.x - rotated.min.x + gap;
        instances.push(SceneInstance { object_id: id.clone(), pose: Isometry3::from_parts(Translation3::from(shift), rot) }.record());
    }
    // center the row on the origin
    let half = 0.5 * (cursor - gap).max(0.0);
    for inst in &mut instances {
        inst.translation[0] -= half;
    }
    Ok(SceneFile { instances, table_height })
}
