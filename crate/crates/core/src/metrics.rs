//! Flatness, gravity-center and collision-perturbation terms and their weighted combination.

use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::force_closure::{force_closure_score, FrictionBins, ScoreError};
use crate::gripper::ContactFrame;
use crate::mesh::{MeshError, SpatialIndex};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WeightsError {
    #[error("weight {0} is negative or not finite")]
    Invalid(f64),
    #[error("weights sum to {0}, expected 1")]
    Sum(f64),
    #[error("expected four comma-separated weights, got {0:?}")]
    Parse(String),
}

/// λ weights of the hybrid score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub lambda_t: f64,
    pub lambda_f: f64,
    pub lambda_g: f64,
    pub lambda_c: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self { lambda_t: 0.7, lambda_f: 0.2, lambda_g: 0.05, lambda_c: 0.05 }
    }
}

impl MetricWeights {
    pub fn new(lambda_t: f64, lambda_f: f64, lambda_g: f64, lambda_c: f64) -> Result<Self, WeightsError> {
        let w = Self { lambda_t, lambda_f, lambda_g, lambda_c };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let all = [self.lambda_t, self.lambda_f, self.lambda_g, self.lambda_c];
        if let Some(&bad) = all.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(WeightsError::Invalid(bad));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WeightsError::Sum(sum));
        }
        Ok(())
    }

    pub fn combine(&self, s_t: f64, s_f: f64, s_g: f64, s_c: f64) -> f64 {
        (self.lambda_t * s_t + self.lambda_f * s_f + self.lambda_g * s_g + self.lambda_c * s_c).clamp(0.0, 1.0)
    }
}

impl FromStr for MetricWeights {
    type Err = WeightsError;

    /// `"t,f,g,c"`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| WeightsError::Parse(s.to_string()))?;
        match parts[..] {
            [t, f, g, c] => Self::new(t, f, g, c),
            _ => Err(WeightsError::Parse(s.to_string())),
        }
    }
}

/// All score components of one grasp. Raw distances are in meters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub s_t: f64,
    pub s_f1: f64,
    pub s_f2: f64,
    pub s_f: f64,
    pub s_g_raw: f64,
    pub s_g: f64,
    pub s_c_raw: f64,
    pub s_c: f64,
    pub s_hybrid: f64,
}

impl ScoreBreakdown {
    pub const FIELDS: [&'static str; 9] =
        ["s_t", "s_f1", "s_f2", "s_f", "s_g_raw", "s_g", "s_c_raw", "s_c", "s_hybrid"];

    pub fn values(&self) -> [f64; 9] {
        [self.s_t, self.s_f1, self.s_f2, self.s_f, self.s_g_raw, self.s_g, self.s_c_raw, self.s_c, self.s_hybrid]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        let [s_t, s_f1, s_f2, s_f, s_g_raw, s_g, s_c_raw, s_c, s_hybrid] = v;
        Self { s_t, s_f1, s_f2, s_f, s_g_raw, s_g, s_c_raw, s_c, s_hybrid }
    }
}

/// Per-candidate scoring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub weights: MetricWeights,
    /// Neighbors per contact for the flatness term.
    pub k: usize,
    pub friction_bins: FrictionBins,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { weights: MetricWeights::default(), k: 10, friction_bins: FrictionBins::default() }
    }
}

fn check(frame: &ContactFrame) -> Result<(), ScoreError> {
    if frame.valid {
        Ok(())
    } else {
        Err(ScoreError::InvalidFrame)
    }
}

/// `(s_f1, s_f2, s_f)`. Each contact's mean neighbor-normal cosine is clamped to `[0, 1]`
/// before averaging the two contacts.
pub fn flatness_score(frame: &ContactFrame, index: &SpatialIndex, k: usize) -> Result<(f64, f64, f64), ScoreError> {
    check(frame)?;
    let consistency = |p: &Point3<f64>, n| -> Result<f64, ScoreError> {
        let neighbors = index.knn(p, k).map_err(|e| match e {
            MeshError::KTooLarge { k, available } => ScoreError::KTooLarge { k, available },
            _ => ScoreError::InvalidFrame,
        })?;
        let mean = neighbors.iter().map(|nb| nb.normal.dot(n)).sum::<f64>() / neighbors.len() as f64;
        Ok(mean.clamp(0.0, 1.0))
    };
    let s_f1 = 0.5 * (consistency(&frame.p_cl, &frame.v_ql)? + consistency(&frame.p_cr, &frame.v_qr)?);
    let s_f2 = (0.5 * (frame.v_a.dot(&frame.v_ql).abs() + frame.v_a.dot(&frame.v_qr).abs())).clamp(0.0, 1.0);
    Ok((s_f1, s_f2, s_f1 * s_f2))
}

/// Distance from `gc` to the line through both contacts.
pub fn gravity_score(frame: &ContactFrame, gc: &Point3<f64>) -> Result<f64, ScoreError> {
    check(frame)?;
    let len = (frame.p_cl - frame.p_cr).norm();
    if len <= 1e-12 {
        return Err(ScoreError::DegenerateContacts);
    }
    Ok((frame.p_cl - gc).cross(&(frame.p_cr - gc)).norm() / len)
}

/// Smaller of the two fingertip-to-contact distances.
pub fn collision_score(frame: &ContactFrame) -> Result<f64, ScoreError> {
    check(frame)?;
    Ok((frame.p_el - frame.p_cl).norm().min((frame.p_er - frame.p_cr).norm()))
}

/// Everything that does not depend on the other candidates: `s_t`, the flatness terms
/// and both raw distances. `s_g`, `s_c` and `s_hybrid` are left at 0.
pub fn raw_scores(
    frame: &ContactFrame,
    index: &SpatialIndex,
    gc: &Point3<f64>,
    bins: &FrictionBins,
    k: usize,
) -> Result<ScoreBreakdown, ScoreError> {
    let s_t = force_closure_score(frame, bins)?;
    let (s_f1, s_f2, s_f) = flatness_score(frame, index, k)?;
    Ok(ScoreBreakdown {
        s_t,
        s_f1,
        s_f2,
        s_f,
        s_g_raw: gravity_score(frame, gc)?,
        s_c_raw: collision_score(frame)?,
        ..Default::default()
    })
}

/// Min and max of one raw column; a constant column maps every value to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(Range { min: v, max: v }),
            Some(r) => Some(Range { min: r.min.min(v), max: r.max.max(v) }),
        })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            ((v - self.min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Ranges of `s_g_raw` and `s_c_raw` over one object's candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub gravity: Range,
    pub collision: Range,
}

impl NormalizationBounds {
    pub fn of(breakdowns: &[ScoreBreakdown]) -> Option<Self> {
        Some(Self {
            gravity: Range::of(breakdowns.iter().map(|b| b.s_g_raw))?,
            collision: Range::of(breakdowns.iter().map(|b| b.s_c_raw))?,
        })
    }

    /// Fills `s_g`, `s_c` and `s_hybrid` from the raw fields.
    pub fn apply(&self, b: &ScoreBreakdown, weights: &MetricWeights) -> ScoreBreakdown {
        let s_g = 1.0 - self.gravity.normalize(b.s_g_raw);
        let s_c = self.collision.normalize(b.s_c_raw);
        ScoreBreakdown { s_g, s_c, s_hybrid: weights.combine(b.s_t, b.s_f, s_g, s_c), ..*b }
    }
}

/// Per-object min–max normalization followed by the weighted sum.
pub fn normalize_and_combine(breakdowns: &[ScoreBreakdown], weights: &MetricWeights) -> Vec<ScoreBreakdown> {
    match NormalizationBounds::of(breakdowns) {
        Some(bounds) => breakdowns.iter().map(|b| bounds.apply(b, weights)).collect(),
        None => Vec::new(),
    }
}

/// Recomputes only `s_hybrid`; the normalized components are kept as they are.
pub fn recombine(b: &ScoreBreakdown, weights: &MetricWeights) -> ScoreBreakdown {
    ScoreBreakdown { s_hybrid: weights.combine(b.s_t, b.s_f, b.s_g, b.s_c), ..*b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gripper::{resolve_contacts, GraspPose, GripperModel};
    use crate::mesh::{shapes, SamplingParams};
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(p_cl: Point3<f64>, p_cr: Point3<f64>, v_ql: Vector3<f64>, v_qr: Vector3<f64>) -> ContactFrame {
        ContactFrame { p_cl, p_cr, p_el: p_cl, p_er: p_cr, v_ql, v_qr, v_a: (p_cr - p_cl).normalize(), valid: true }
    }

    #[test]
    fn plate_pinch_is_perfectly_flat() {
        let plate = shapes::plate(0.2, 0.01).densified(&SamplingParams::default());
        let f = frame(
            Point3::new(0.01, -0.02, -0.005),
            Point3::new(0.01, -0.02, 0.005),
            -Vector3::z(),
            Vector3::z(),
        );
        let (f1, f2, sf) = flatness_score(&f, plate.surface().unwrap(), 10).unwrap();
        assert!((f1 - 1.0).abs() < 1e-6 && (f2 - 1.0).abs() < 1e-6 && (sf - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grazing_line_has_zero_alignment() {
        let plate = shapes::plate(0.2, 0.01).densified(&SamplingParams::default());
        let f = ContactFrame {
            v_a: Vector3::x(),
            ..frame(Point3::new(0.0, 0.0, 0.005), Point3::new(0.05, 0.0, 0.005), Vector3::z(), Vector3::z())
        };
        let (_, f2, sf) = flatness_score(&f, plate.surface().unwrap(), 10).unwrap();
        assert!(f2.abs() < 1e-6 && sf.abs() < 1e-6);
    }

    #[test]
    fn sphere_diametral_flatness_matches_brute_force() {
        let sphere = shapes::icosphere(0.03, 3).densified(&SamplingParams::default());
        assert_eq!(sphere.vertices().len(), 642);
        let gripper = GripperModel::default();
        // approach -z through the center, closing along x
        let r = Matrix3::from_columns(&[-Vector3::z(), Vector3::x(), -Vector3::y()]);
        let pose = GraspPose::new(r, Point3::new(0.0, 0.0, 0.03), 0.085, 0.03).unwrap();
        let f = resolve_contacts(&sphere, &pose, &gripper);
        assert!(f.valid);
        let index = sphere.surface().unwrap();
        let (f1, f2, _) = flatness_score(&f, index, 10).unwrap();
        assert!(f2 >= 0.99, "{f2}");

        let brute = |p: &Point3<f64>, n: &Vector3<f64>| {
            let mut order: Vec<usize> = (0..index.len()).collect();
            order.sort_by(|&a, &b| {
                let da = (index.points()[a] - p).norm_squared();
                let db = (index.points()[b] - p).norm_squared();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            let mean = order[..10].iter().map(|&i| index.normals()[i].dot(n)).sum::<f64>() / 10.0;
            mean.clamp(0.0, 1.0)
        };
        let oracle = 0.5 * (brute(&f.p_cl, &f.v_ql) + brute(&f.p_cr, &f.v_qr));
        assert!((f1 - oracle).abs() < 1e-9);
    }

    #[test]
    fn k_larger_than_cloud_is_reported() {
        let index = SpatialIndex::new(vec![Point3::origin()], vec![Vector3::z()]);
        let f = frame(Point3::origin(), Point3::new(0.0, 0.0, 0.01), -Vector3::z(), Vector3::z());
        assert_eq!(flatness_score(&f, &index, 2), Err(ScoreError::KTooLarge { k: 2, available: 1 }));
    }

    #[test]
    fn gravity_examples() {
        let f = frame(Point3::new(-1.0, 0.0, 1.0), Point3::new(1.0, 0.0, 1.0), -Vector3::x(), Vector3::x());
        assert_eq!(gravity_score(&f, &Point3::origin()).unwrap(), 1.0);
        assert!(gravity_score(&f, &Point3::new(0.3, 0.0, 1.0)).unwrap().abs() < 1e-12);
        let mut same = f;
        same.p_cr = same.p_cl;
        assert_eq!(gravity_score(&same, &Point3::origin()), Err(ScoreError::DegenerateContacts));
    }

    #[test]
    fn gravity_matches_line_parameter_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pt = |rng: &mut ChaCha8Rng, s: f64| {
            Point3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
        };
        for _ in 0..1000 {
            let p_cl = pt(&mut rng, 0.05);
            let dir = pt(&mut rng, 1.0).coords.normalize();
            let p_cr = p_cl + dir * rng.random_range(0.01..0.085);
            let gc = pt(&mut rng, 0.1);
            let f = frame(p_cl, p_cr, -dir, dir);
            let along = |t: f64| (gc - (p_cl + (p_cr - p_cl) * t)).norm();
            let search = |lo: f64, hi: f64, n: usize| {
                (0..=n)
                    .map(|i| lo + (hi - lo) * i as f64 / n as f64)
                    .map(|t| (along(t), t))
                    .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
            };
            let (_, t0) = search(-30.0, 31.0, 61_000);
            let (best, _) = search(t0 - 2e-3, t0 + 2e-3, 40_000);
            assert!((gravity_score(&f, &gc).unwrap() - best).abs() < 1e-6);
        }
    }

    #[test]
    fn collision_examples() {
        let mut f = frame(Point3::new(-0.02, 0.0, 0.0), Point3::new(0.02, 0.0, 0.0), -Vector3::x(), Vector3::x());
        assert_eq!(collision_score(&f).unwrap(), 0.0);
        f.p_el = f.p_cl - Vector3::z() * 0.005;
        f.p_er = f.p_cr - Vector3::z() * 0.005;
        assert!((collision_score(&f).unwrap() - 0.005).abs() < 1e-15);
        f.p_el = f.p_cl - Vector3::z() * 0.003;
        f.p_er = f.p_cr - Vector3::z() * 0.009;
        assert!((collision_score(&f).unwrap() - 0.003).abs() < 1e-15);
        f.valid = false;
        assert_eq!(collision_score(&f), Err(ScoreError::InvalidFrame));
    }

    fn raw(s_t: f64, s_f: f64, s_g_raw: f64, s_c_raw: f64) -> ScoreBreakdown {
        ScoreBreakdown { s_t, s_f1: s_f, s_f2: 1.0, s_f, s_g_raw, s_c_raw, ..Default::default() }
    }

    #[test]
    fn single_candidate_uses_constant_column_convention() {
        let out = normalize_and_combine(&[raw(0.5, 0.4, 0.02, 0.01)], &MetricWeights::default());
        assert_eq!((out[0].s_g, out[0].s_c), (1.0, 0.0));
        assert!(normalize_and_combine(&[], &MetricWeights::default()).is_empty());
    }

    #[test]
    fn weight_collapse_gives_force_closure() {
        let w = MetricWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let input = [raw(0.3, 0.9, 0.0, 0.01), raw(1.0, 0.1, 0.05, 0.02), raw(0.0, 0.5, 0.01, 0.0)];
        for b in normalize_and_combine(&input, &w) {
            assert_eq!(b.s_hybrid, b.s_t);
        }
    }

    #[test]
    fn gravity_gap_is_exactly_lambda_g() {
        let w = MetricWeights::default();
        let out = normalize_and_combine(&[raw(0.6, 0.5, 0.0, 0.01), raw(0.6, 0.5, 0.02, 0.01)], &w);
        assert!(out[0].s_hybrid > out[1].s_hybrid);
        assert!((out[0].s_hybrid - out[1].s_hybrid - w.lambda_g).abs() < 1e-12);
    }

    #[test]
    fn weights_parse_and_validate() {
        assert_eq!("1,0,0,0".parse::<MetricWeights>().unwrap(), MetricWeights::new(1.0, 0.0, 0.0, 0.0).unwrap());
        assert!("0.7,0.2,0.05,0.05".parse::<MetricWeights>().is_ok());
        assert!(matches!("0.5,0.5,0.5,0".parse::<MetricWeights>(), Err(WeightsError::Sum(_))));
        assert!(matches!("1,0,0".parse::<MetricWeights>(), Err(WeightsError::Parse(_))));
        assert!(matches!("1.5,-0.5,0,0".parse::<MetricWeights>(), Err(WeightsError::Invalid(_))));
    }
}
