use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriangleMesh;

/// Controls surface densification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    /// Samples per square meter (250 000 is one point per 4 mm²).
    pub density: f64,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { density: 250_000.0, max_samples: 100_000, seed: 0 }
    }
}

/// Area-uniform random samples with interpolated unit normals. Deterministic in
/// `params.seed`.
pub fn sample_surface(
    mesh: &TriangleMesh,
    params: &SamplingParams,
) -> (Vec<Point3<f64>>, Vec<Vector3<f64>>) {
    let mut cdf = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    let wanted = total * params.density;
    let count = ((wanted * (1.0 - 1e-12)).ceil() as usize).clamp(1, params.max_samples.max(1));

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let face = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let bary = [1.0 - s, s * (1.0 - r2), s * r2];
        let [a, b, c] = mesh.triangle(face);
        points.push(Point3::from(a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2]));
        normals.push(mesh.normal_at(face, bary));
    }
    (points, normals)
}

/// Greedy farthest-point subset of size `n` (or all points if fewer), starting from
/// index 0. Ties pick the lowest index.
pub fn farthest_point_sampling(points: &[Point3<f64>], n: usize) -> Vec<usize> {
    let n = n.min(points.len());
    if n == 0 {
        return Vec::new();
    }
    let mut chosen = Vec::with_capacity(n);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0usize;
    for _ in 0..n {
        chosen.push(current);
        let p = points[current];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, q) in points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        current = best.1;
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn density_sets_sample_count() {
        let cube = shapes::cuboid(Vector3::new(0.05, 0.05, 0.05), 1);
        let (pts, normals) = sample_surface(&cube, &SamplingParams::default());
        // 6 * 25 cm² = 150 cm² at 25 points per cm²
        assert_eq!(pts.len(), 3750);
        assert!(normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
        // every sample lies on a face with that face's normal
        for (p, n) in pts.iter().zip(&normals) {
            let sp = cube.closest_surface_point(p);
            assert!(sp.distance < 1e-12);
            assert!((sp.normal - n).norm() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let sphere = shapes::icosphere(0.03, 2);
        let a = sample_surface(&sphere, &SamplingParams::default());
        let b = sample_surface(&sphere, &SamplingParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn sample_cap_applies() {
        let cube = shapes::cuboid(Vector3::new(1.0, 1.0, 1.0), 1);
        let params = SamplingParams { max_samples: 500, ..Default::default() };
        assert_eq!(sample_surface(&cube, &params).0.len(), 500);
    }

    #[test]
    fn fps_spreads_and_is_exhaustive() {
        let pts: Vec<_> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(farthest_point_sampling(&pts, 3), vec![0, 9, 4]);
        let mut all = farthest_point_sampling(&pts, 20);
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(farthest_point_sampling(&[], 3).is_empty());
    }
}
