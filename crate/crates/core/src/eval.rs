//! Grasp NMS, collision filtering and the top-k AP / mAP protocol.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gripper::{gripper_collides_indexed, resolve_contacts, GraspPose, GripperModel};
use crate::metrics::{raw_scores, MetricParams};
use crate::scene::{LibraryObject, ObjectLibrary, SceneError, SceneInstance, SceneLayout};

/// A grasp proposed by an external predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedGrasp {
    pub grasp: GraspPose,
    pub predicted_score: f64,
    pub object_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsParams {
    /// Meters.
    pub trans_thresh: f64,
    /// Degrees.
    pub rot_thresh_deg: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self { trans_thresh: 0.03, rot_thresh_deg: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub top_k: usize,
    pub thresholds: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { top_k: 50, thresholds: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9] }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    NoPredictions,
    #[error("UnknownObjectId: {0}")]
    UnknownObjectId(String),
    #[error("scene has no instances")]
    EmptyScene,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

fn pose_key(g: &GraspPose) -> [f64; 14] {
    let r = g.rotation.matrix();
    let t = g.translation;
    [
        r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)],
        t.x, t.y, t.z, g.width, g.depth,
    ]
}

fn rank_cmp(a: &PredictedGrasp, b: &PredictedGrasp) -> Ordering {
    b.predicted_score
        .total_cmp(&a.predicted_score)
        .then_with(|| {
            pose_key(&a.grasp)
                .iter()
                .zip(pose_key(&b.grasp).iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.object_id.cmp(&b.object_id))
}

/// Indices in rank order: score descending, then the pose itself, then object id, then
/// input position. Ordering on the pose makes the result independent of how
/// equal-scored predictions are listed.
pub fn rank(predictions: &[PredictedGrasp]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&i, &j| rank_cmp(&predictions[i], &predictions[j]).then(i.cmp(&j)));
    order
}

/// True when `b` would be suppressed by an already kept `a`.
pub fn suppresses(a: &GraspPose, b: &GraspPose, trans_thresh: f64, rot_thresh: f64) -> bool {
    (a.translation - b.translation).norm() < trans_thresh && a.rotation_distance(b) < rot_thresh
}

/// Greedy NMS; returns kept indices in rank order. `rot_thresh` is in radians.
pub fn grasp_nms_indices(predictions: &[PredictedGrasp], trans_thresh: f64, rot_thresh: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in rank(predictions) {
        let g = &predictions[i].grasp;
        if !kept.iter().any(|&k| suppresses(&predictions[k].grasp, g, trans_thresh, rot_thresh)) {
            kept.push(i);
        }
    }
    kept
}

pub fn grasp_nms(predictions: &[PredictedGrasp], trans_thresh: f64, rot_thresh: f64) -> Vec<PredictedGrasp> {
    grasp_nms_indices(predictions, trans_thresh, rot_thresh)
        .into_iter()
        .map(|i| predictions[i].clone())
        .collect()
}

/// Mean over `k = 1..=top_k` of the fraction of the first `k` scores that reach `tau`.
/// Missing slots (fewer than `top_k` scores) never count as hits.
pub fn average_precision(ranked_true_scores: &[f64], top_k: usize, tau: f64) -> f64 {
    if top_k == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for k in 1..=top_k {
        if ranked_true_scores.get(k - 1).is_some_and(|&s| s >= tau) {
            hits += 1;
        }
        sum += hits as f64 / k as f64;
    }
    sum / top_k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_predictions: usize,
    pub n_filtered_nms: usize,
    pub n_filtered_collision: usize,
    /// Survivors actually scored (at most `top_k`).
    pub n_evaluated: usize,
    pub empty_after_filtering: bool,
    pub ap_at_threshold: Vec<ThresholdAp>,
    pub map_value: f64,
    /// Recomputed hybrid score of each evaluated grasp, in rank order.
    pub true_scores: Vec<f64>,
}

/// AP per threshold and their mean for already ranked true scores.
pub fn ap_table(ranked_true_scores: &[f64], params: &EvalParams) -> (Vec<ThresholdAp>, f64) {
    let table: Vec<ThresholdAp> = params
        .thresholds
        .iter()
        .map(|&t| ThresholdAp { threshold: t, ap: average_precision(ranked_true_scores, params.top_k, t) })
        .collect();
    let map = if table.is_empty() { 0.0 } else { table.iter().map(|t| t.ap).sum::<f64>() / table.len() as f64 };
    (table, map)
}

/// Hybrid score of a world-frame grasp on one placed object, using the object's own
/// normalization ranges. Grasps wider than the gripper or without a valid contact frame
/// score 0.
pub fn true_score(
    grasp: &GraspPose,
    instance: &SceneInstance,
    object: &LibraryObject,
    gripper: &GripperModel,
    metric: &MetricParams,
) -> f64 {
    if grasp.width > gripper.max_width {
        return 0.0;
    }
    let local = grasp.transformed(&instance.pose.inverse());
    let frame = resolve_contacts(&object.mesh, &local, gripper);
    if !frame.valid {
        return 0.0;
    }
    let Some(index) = object.mesh.surface() else {
        return 0.0;
    };
    match raw_scores(&frame, index, &object.mass.gravity_center, &metric.friction_bins, metric.k) {
        Ok(raw) => object.bounds.apply(&raw, &metric.weights).s_hybrid,
        Err(_) => 0.0,
    }
}

/// The instance a prediction refers to: the nearest instance (by surface distance from
/// the grasp center) among those matching its object id, or among all when it has none.
pub fn associate<'a>(
    prediction: &PredictedGrasp,
    scene: &'a SceneLayout,
    library: &ObjectLibrary,
) -> Result<&'a SceneInstance, EvalError> {
    let mut best: Option<(f64, &SceneInstance)> = None;
    for inst in &scene.instances {
        if prediction.object_id.as_deref().is_some_and(|id| id != inst.object_id) {
            continue;
        }
        let obj = library.get(&inst.object_id)?;
        let local = inst.pose.inverse_transform_point(&prediction.grasp.translation);
        let d = obj.mesh.closest_surface_point(&local).distance;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, inst));
        }
    }
    match (best, &prediction.object_id) {
        (Some((_, inst)), _) => Ok(inst),
        (None, Some(id)) => Err(EvalError::UnknownObjectId(id.clone())),
        (None, None) => Err(EvalError::EmptyScene),
    }
}

/// NMS, then scene-collision filtering, then top-k by predicted score, then AP over the
/// recomputed hybrid scores for each threshold.
pub fn evaluate_ap(
    predictions: &[PredictedGrasp],
    scene: &SceneLayout,
    library: &ObjectLibrary,
    gripper: &GripperModel,
    metric: &MetricParams,
    nms: &NmsParams,
    params: &EvalParams,
) -> Result<EvalReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::NoPredictions);
    }
    let kept = grasp_nms_indices(predictions, nms.trans_thresh, nms.rot_thresh_deg.to_radians());
    let n_filtered_nms = predictions.len() - kept.len();
    let free: Vec<usize> = kept
        .into_iter()
        .filter(|&i| !gripper_collides_indexed(&scene.scene_cloud, &predictions[i].grasp, gripper))
        .collect();
    let n_filtered_collision = predictions.len() - n_filtered_nms - free.len();

    let mut true_scores = Vec::new();
    for &i in free.iter().take(params.top_k) {
        let p = &predictions[i];
        let inst = associate(p, scene, library)?;
        let obj = library.get(&inst.object_id)?;
        true_scores.push(true_score(&p.grasp, inst, obj, gripper, metric));
    }
    let (ap_at_threshold, map_value) = ap_table(&true_scores, params);
    Ok(EvalReport {
        n_predictions: predictions.len(),
        n_filtered_nms,
        n_filtered_collision,
        n_evaluated: true_scores.len(),
        empty_after_filtering: free.is_empty(),
        ap_at_threshold,
        map_value,
        true_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pred(t: Point3<f64>, r: Rotation3<f64>, score: f64) -> PredictedGrasp {
        PredictedGrasp { grasp: GraspPose::new(*r.matrix(), t, 0.05, 0.02).unwrap(), predicted_score: score, object_id: None }
    }

    fn random_preds(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<PredictedGrasp> {
        (0..n)
            .map(|_| {
                let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let t = Point3::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread), rng.random_range(-spread..spread));
                pred(t, Rotation3::new(axis.normalize() * rng.random_range(0.0..1.0)), rng.random_range(0..5) as f64 / 4.0)
            })
            .collect()
    }

    #[test]
    fn duplicate_keeps_the_higher_score() {
        let p = [pred(Point3::origin(), Rotation3::identity(), 0.8), pred(Point3::origin(), Rotation3::identity(), 0.9)];
        let kept = grasp_nms(&p, 0.03, 30f64.to_radians());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].predicted_score, 0.9);
    }

    #[test]
    fn distant_grasps_both_survive() {
        let p = [pred(Point3::origin(), Rotation3::identity(), 0.8), pred(Point3::new(1.0, 0.0, 0.0), Rotation3::identity(), 0.9)];
        assert_eq!(grasp_nms(&p, 0.03, 30f64.to_radians()).len(), 2);
    }

    #[test]
    fn survivors_pass_pairwise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let preds = random_preds(&mut rng, 100, 0.04);
        let rot = 30f64.to_radians();
        let kept = grasp_nms_indices(&preds, 0.03, rot);
        assert!(kept.len() < 100 && kept.len() > 1);
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                assert!(!suppresses(&preds[i].grasp, &preds[j].grasp, 0.03, rot));
            }
        }
        // every dropped grasp is explained by a higher-ranked survivor
        let order = rank(&preds);
        let pos = |i: usize| order.iter().position(|&o| o == i).unwrap();
        for i in (0..100).filter(|i| !kept.contains(i)) {
            assert!(kept.iter().any(|&k| pos(k) < pos(i) && suppresses(&preds[k].grasp, &preds[i].grasp, 0.03, rot)));
        }
        // the top-ranked prediction always survives
        assert_eq!(kept[0], order[0]);
    }

    #[test]
    fn nms_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let preds = random_preds(&mut rng, 80, 0.05);
        let kept: Vec<_> = grasp_nms(&preds, 0.03, 0.5);
        let mut shuffled = preds.clone();
        shuffled.reverse();
        shuffled.swap(3, 40);
        assert_eq!(grasp_nms(&shuffled, 0.03, 0.5), kept);
    }

    #[test]
    fn ap_examples() {
        let params = EvalParams::default();
        let (_, perfect) = ap_table(&[1.0; 50], &params);
        assert_eq!(perfect, 1.0);
        let (table, zero) = ap_table(&[0.0; 50], &params);
        assert_eq!(table[0].ap, 1.0);
        assert!(table[1..].iter().all(|t| t.ap == 0.0));
        assert!((zero - 1.0 / 6.0).abs() < 1e-12);

        let mut half = vec![1.0; 25];
        half.extend([0.0; 25]);
        let ap = average_precision(&half, 50, 0.5);
        // 25 + 25 * (H_50 - H_25), over 50, summed exactly in rational arithmetic
        let oracle = 0.8416235802879591;
        assert!((ap - oracle).abs() < 1e-12);
        let (_, m) = ap_table(&half, &params);
        assert!((m - (1.0 + 5.0 * oracle) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn padding_never_passes() {
        // (10 + 10 * (H_50 - H_10)) / 50: the ten hits stay, the forty padded slots never count
        assert!((average_precision(&[1.0; 10], 50, 0.0) - 0.5140474168722342).abs() < 1e-12);
        assert_eq!(average_precision(&[], 50, 0.0), 0.0);
    }

    #[test]
    fn ap_is_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..rng.random_range(0..60)).map(|_| rng.random::<f64>()).collect();
            let params = EvalParams { top_k: 50, thresholds: (0..=20).map(|i| i as f64 / 20.0).collect() };
            let (table, _) = ap_table(&scores, &params);
            assert!(table.windows(2).all(|w| w[0].ap >= w[1].ap));
            assert!(table.iter().all(|t| (0.0..=1.0).contains(&t.ap)));
        }
    }
}
