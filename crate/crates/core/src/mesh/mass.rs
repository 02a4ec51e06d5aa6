use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidMethod {
    VolumeCentroid,
    AreaCentroid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProperties {
    pub gravity_center: Point3<f64>,
    /// Enclosed volume in m³; zero when the area fallback was used.
    pub volume: f64,
    pub method_used: CentroidMethod,
}

/// Uniform-density centroid by signed-tetrahedron integration for closed meshes,
/// otherwise the area-weighted surface centroid.
///
/// Tetrahedra fan out from the bounding-box center instead of the world origin; the
/// integral is the same but stays well conditioned for meshes far from the origin.
pub fn mass_properties(mesh: &TriangleMesh) -> MassProperties {
    let apex = mesh.bounds().center();
    let scale = mesh.bounds().diagonal().max(f64::MIN_POSITIVE);

    if mesh.is_watertight() {
        let mut volume = 0.0;
        let mut moment = Vector3::zeros();
        for f in mesh.faces() {
            let [a, b, c] = f.map(|i| mesh.vertices()[i] - apex);
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            // tetra centroid relative to apex is (a + b + c) / 4
            moment += (a + b + c) * (v / 4.0);
        }
        if volume > 1e-12 * scale.powi(3) {
            return MassProperties {
                gravity_center: apex + moment / volume,
                volume,
                method_used: CentroidMethod::VolumeCentroid,
            };
        }
    }

    let mut area = 0.0;
    let mut moment = Vector3::zeros();
    for face in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(face).map(|p| p - apex);
        let w = mesh.face_area(face);
        area += w;
        moment += (a + b + c) * (w / 3.0);
    }
    MassProperties {
        gravity_center: apex + moment / area,
        volume: 0.0,
        method_used: CentroidMethod::AreaCentroid,
    }
}
