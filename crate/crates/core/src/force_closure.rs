//! Two-contact antipodal friction-cone test and the ten-bin score `S_t`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gripper::ContactFrame;

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("InvalidFrame: contact frame is not valid")]
    InvalidFrame,
    #[error("DegenerateContacts: contact points coincide")]
    DegenerateContacts,
    #[error("KTooLarge: k = {k} exceeds {available} surface samples")]
    KTooLarge { k: usize, available: usize },
}

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum BinsError {
    #[error("friction bins must be non-empty")]
    Empty,
    #[error("friction coefficient {0} must be positive and finite")]
    NonPositive(f64),
    #[error("friction bins must be strictly increasing (at {0})")]
    NotIncreasing(f64),
}

/// Ordered friction coefficients tried from the lowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrictionBins {
    mus: Vec<f64>,
}

impl FrictionBins {
    pub fn new(mus: Vec<f64>) -> Result<Self, BinsError> {
        if mus.is_empty() {
            return Err(BinsError::Empty);
        }
        for (i, &m) in mus.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(BinsError::NonPositive(m));
            }
            if i > 0 && m <= mus[i - 1] {
                return Err(BinsError::NotIncreasing(m));
            }
        }
        Ok(Self { mus })
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }
}

impl Default for FrictionBins {
    /// 0.1, 0.2, ..., 1.0
    fn default() -> Self {
        Self { mus: (1..=10).map(|k| k as f64 / 10.0).collect() }
    }
}

impl TryFrom<Vec<f64>> for FrictionBins {
    type Error = BinsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FrictionBins> for Vec<f64> {
    fn from(b: FrictionBins) -> Self {
        b.mus
    }
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// True iff the contact line lies in both friction cones of half-angle `atan(mu)` around
/// the inward normals.
pub fn antipodal_force_closure(frame: &ContactFrame, mu: f64) -> Result<bool, ScoreError> {
    if !frame.valid {
        return Err(ScoreError::InvalidFrame);
    }
    let half = mu.atan();
    Ok(angle_between(&frame.v_a, &-frame.v_ql) <= half
        && angle_between(&-frame.v_a, &-frame.v_qr) <= half)
}

/// Smallest bin coefficient that passes, if any.
pub fn min_friction(frame: &ContactFrame, bins: &FrictionBins) -> Result<Option<f64>, ScoreError> {
    for &mu in bins.mus() {
        if antipodal_force_closure(frame, mu)? {
            return Ok(Some(mu));
        }
    }
    Ok(None)
}

/// `1.1 - mu_min` (0 when no bin passes), snapped to the 0.1 grid when within 1e-9 so
/// the default bins give exactly the values `k / 10`.
pub fn force_closure_score(frame: &ContactFrame, bins: &FrictionBins) -> Result<f64, ScoreError> {
    Ok(match min_friction(frame, bins)? {
        Some(mu) => {
            let s = (1.1 - mu).max(0.0);
            let tenths = (s * 10.0).round();
            if (s - tenths / 10.0).abs() < 1e-9 {
                tenths / 10.0
            } else {
                s
            }
        }
        None => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn frame_with_normal_tilts(left_deg: f64, right_deg: f64) -> ContactFrame {
        let tilt = |deg: f64| Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians());
        ContactFrame {
            p_cl: Point3::new(-0.5, 0.0, 0.0),
            p_cr: Point3::new(0.5, 0.0, 0.0),
            p_el: Point3::new(-0.5, 0.0, -0.1),
            p_er: Point3::new(0.5, 0.0, -0.1),
            v_ql: tilt(left_deg) * -Vector3::x(),
            v_qr: tilt(right_deg) * Vector3::x(),
            v_a: Vector3::x(),
            valid: true,
        }
    }

    /// Cone membership by explicit boundary sampling: the circular cone is bracketed by an
    /// inscribed and a circumscribed m-sided pyramid whose facets pass through sampled
    /// boundary rays. Returns None inside the thin band between them.
    fn in_cone_sampled(axis: &Vector3<f64>, half: f64, v: &Vector3<f64>, m: usize) -> Option<bool> {
        let axis = axis.normalize();
        let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = axis.cross(&helper).normalize();
        let e2 = axis.cross(&e1);
        let ray = |phi: f64, h: f64| axis * h.cos() + (e1 * phi.cos() + e2 * phi.sin()) * h.sin();
        let inside_pyramid = |h: f64| {
            (0..m).all(|j| {
                let a = ray(2.0 * PI * j as f64 / m as f64, h);
                let b = ray(2.0 * PI * (j + 1) as f64 / m as f64, h);
                a.cross(&b).dot(v) >= 0.0
            })
        };
        if half >= PI / 2.0 {
            return Some(v.dot(&axis) >= 0.0);
        }
        let outer = (half.tan() / (PI / m as f64).cos()).atan();
        match (inside_pyramid(half), inside_pyramid(outer.min(PI / 2.0 - 1e-12))) {
            (true, _) => Some(true),
            (false, false) => Some(false),
            _ => None,
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn random_frame(rng: &mut ChaCha8Rng) -> ContactFrame {
        let p_cl = Point3::from(random_unit(rng) * 0.05);
        let v_a = random_unit(rng);
        let p_cr = p_cl + v_a * rng.random_range(0.005..0.08);
        let perturb = |rng: &mut ChaCha8Rng, n: Vector3<f64>| {
            let axis = Unit::new_normalize(n.cross(&random_unit(rng)));
            Rotation3::from_axis_angle(&axis, rng.random_range(0.0..1.2)) * n
        };
        ContactFrame {
            p_cl,
            p_cr,
            p_el: p_cl,
            p_er: p_cr,
            v_ql: perturb(rng, -v_a),
            v_qr: perturb(rng, v_a),
            v_a,
            valid: true,
        }
    }

    #[test]
    fn exact_antipodal_passes_lowest_bin() {
        let f = frame_with_normal_tilts(0.0, 0.0);
        assert!(antipodal_force_closure(&f, 0.1).unwrap());
        assert_eq!(force_closure_score(&f, &FrictionBins::default()).unwrap(), 1.0);
    }

    #[test]
    fn forty_five_degrees_splits_half_and_one_and_half() {
        let f = frame_with_normal_tilts(45.0, -45.0);
        assert!(!antipodal_force_closure(&f, 0.5).unwrap());
        assert!(antipodal_force_closure(&f, 1.5).unwrap());
        let steep = frame_with_normal_tilts(50.0, -50.0);
        assert_eq!(force_closure_score(&steep, &FrictionBins::default()).unwrap(), 0.0);
    }

    #[test]
    fn thirty_degrees_scores_one_half() {
        assert!(0.5f64.atan().to_degrees() < 30.0 && 30.0 <= 0.6f64.atan().to_degrees());
        let f = frame_with_normal_tilts(30.0, 30.0);
        assert_eq!(min_friction(&f, &FrictionBins::default()).unwrap(), Some(0.6));
        assert_eq!(force_closure_score(&f, &FrictionBins::default()).unwrap(), 0.5);
    }

    #[test]
    fn invalid_frame_is_an_error() {
        let mut f = frame_with_normal_tilts(0.0, 0.0);
        f.valid = false;
        assert_eq!(antipodal_force_closure(&f, 0.3), Err(ScoreError::InvalidFrame));
        assert_eq!(force_closure_score(&f, &FrictionBins::default()), Err(ScoreError::InvalidFrame));
    }

    #[test]
    fn bins_validate() {
        assert_eq!(FrictionBins::default().mus().len(), 10);
        assert_eq!(FrictionBins::default().mus()[2], 0.3);
        assert!(FrictionBins::new(vec![]).is_err());
        assert!(FrictionBins::new(vec![0.2, 0.1]).is_err());
        assert!(FrictionBins::new(vec![0.0, 0.1]).is_err());
    }

    #[test]
    fn matches_cone_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bins = FrictionBins::default();
        let mut agree = 0;
        let mut total = 0;
        for _ in 0..500 {
            let f = random_frame(&mut rng);
            for &mu in bins.mus() {
                let half = mu.atan();
                let l = in_cone_sampled(&-f.v_ql, half, &f.v_a, 720);
                let r = in_cone_sampled(&-f.v_qr, half, &-f.v_a, 720);
                let oracle = match (l, r) {
                    (Some(a), Some(b)) => a && b,
                    (Some(false), None) | (None, Some(false)) => false,
                    _ => panic!("frame within the sampling band"),
                };
                total += 1;
                agree += (antipodal_force_closure(&f, mu).unwrap() == oracle) as usize;
            }
        }
        assert_eq!(agree, total);
    }

    #[test]
    fn pass_is_monotone_and_scores_discrete() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bins = FrictionBins::default();
        let allowed: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        for _ in 0..500 {
            let f = random_frame(&mut rng);
            let passes: Vec<bool> = bins.mus().iter().map(|&m| antipodal_force_closure(&f, m).unwrap()).collect();
            assert!(passes.windows(2).all(|w| !w[0] || w[1]));
            let s = force_closure_score(&f, &bins).unwrap();
            assert!(allowed.contains(&s), "{s}");
        }
    }
}
