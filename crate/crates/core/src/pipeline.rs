//! End-to-end labeling of one object and object-library assembly.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::candidates::{enumerate_candidates_par, Candidate, CandidateGrid, EnumerationStats};
use crate::config::Config;
use crate::labels::{read_labels, GraspRecord, LabelError};
use crate::mesh::{load_mesh, mass_properties, MassProperties, MeshError, MeshFormat, TriangleMesh};
use crate::metrics::{normalize_and_combine, raw_scores, MetricParams, NormalizationBounds, Range, ScoreBreakdown};
use crate::scene::LibraryObject;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error("ParseError: no mesh file for object {id:?} in {dir} (looked for .obj and .ply)")]
    MissingMesh { id: String, dir: String },
}

/// Scored candidates of one object, in grid order.
#[derive(Debug, Clone)]
pub struct LabeledObject {
    pub candidates: Vec<Candidate>,
    pub breakdowns: Vec<ScoreBreakdown>,
    pub stats: EnumerationStats,
    /// Valid candidates dropped because a metric could not be evaluated.
    pub scoring_failures: usize,
    pub mass: MassProperties,
    pub grid_size: usize,
}

impl LabeledObject {
    pub fn records<'a>(&'a self, object_id: &'a str) -> impl Iterator<Item = GraspRecord<'a>> + 'a {
        self.candidates
            .iter()
            .zip(&self.breakdowns)
            .map(move |(c, b)| GraspRecord { object_id, pose: c.pose, breakdown: *b })
    }

    pub fn bounds(&self) -> NormalizationBounds {
        bounds_or_default(&self.breakdowns)
    }
}

fn bounds_or_default(b: &[ScoreBreakdown]) -> NormalizationBounds {
    NormalizationBounds::of(b).unwrap_or(NormalizationBounds {
        gravity: Range { min: 0.0, max: 0.0 },
        collision: Range { min: 0.0, max: 0.0 },
    })
}

/// Loads a mesh and attaches its surface samples.
pub fn load_object_mesh(path: &Path, unit_scale: f64, config: &Config) -> Result<TriangleMesh, PipelineError> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| MeshError::Parse(format!("{}: unknown mesh extension (expected .obj or .ply)", path.display())))?;
    let (mesh, report) = load_mesh(path, format, unit_scale)?;
    if report.degenerate_faces > 0 {
        log::warn!("{}: {} zero-area faces dropped", path.display(), report.degenerate_faces);
    }
    Ok(mesh.densified(&config.sampling()))
}

/// Raw per-candidate scores, computed in parallel; `None` where a metric failed.
pub fn score_candidates(
    mesh: &TriangleMesh,
    candidates: &[Candidate],
    mass: &MassProperties,
    metric: &MetricParams,
) -> Vec<Option<ScoreBreakdown>> {
    let Some(index) = mesh.surface() else {
        return vec![None; candidates.len()];
    };
    candidates
        .par_iter()
        .map(|c| raw_scores(&c.frame, index, &mass.gravity_center, &metric.friction_bins, metric.k).ok())
        .collect()
}

/// Candidate generation, scoring and per-object normalization for a densified mesh.
pub fn label_mesh(mesh: &TriangleMesh, config: &Config) -> LabeledObject {
    let grid = CandidateGrid::new(mesh, &config.grid, &config.gripper);
    let (candidates, stats) = enumerate_candidates_par(mesh, &grid, &config.gripper, config.grid.self_collision);
    let mass = mass_properties(mesh);
    let raw = score_candidates(mesh, &candidates, &mass, &config.metric);

    let mut kept = Vec::with_capacity(candidates.len());
    let mut partial = Vec::with_capacity(candidates.len());
    for (c, r) in candidates.into_iter().zip(raw) {
        if let Some(r) = r {
            kept.push(c);
            partial.push(r);
        }
    }
    let scoring_failures = stats.yielded - kept.len();
    LabeledObject {
        candidates: kept,
        breakdowns: normalize_and_combine(&partial, &config.metric.weights),
        stats,
        scoring_failures,
        mass,
        grid_size: grid.len(),
    }
}

/// `<dir>/<id>.obj`, else `<dir>/<id>.ply`.
pub fn find_mesh(dir: &Path, id: &str) -> Option<PathBuf> {
    ["obj", "ply"].iter().map(|ext| dir.join(format!("{id}.{ext}"))).find(|p| p.is_file())
}

/// Loads one library object. Normalization ranges come from `<dir>/<id>.csv` when that
/// label file exists, otherwise from labeling the mesh afresh.
pub fn load_library_object(dir: &Path, id: &str, unit_scale: f64, config: &Config) -> Result<LibraryObject, PipelineError> {
    let path = find_mesh(dir, id)
        .ok_or_else(|| PipelineError::MissingMesh { id: id.to_string(), dir: dir.display().to_string() })?;
    let mesh = load_object_mesh(&path, unit_scale, config)?;
    let mass = mass_properties(&mesh);
    let labels = dir.join(format!("{id}.csv"));
    let bounds = if labels.is_file() {
        let recs = read_labels(&labels)?;
        let b: Vec<ScoreBreakdown> = recs.iter().filter(|r| r.object_id == id).map(|r| r.breakdown).collect();
        bounds_or_default(&b)
    } else {
        log::info!("{id}: no label file, labeling to obtain normalization ranges");
        label_mesh(&mesh, config).bounds()
    };
    Ok(LibraryObject { mesh, mass, bounds })
}

/// Counts of `values` in ten equal bins over `[0, 1]`; 1.0 falls in the last bin.
pub fn histogram(values: impl IntoIterator<Item = f64>) -> [usize; 10] {
    let mut h = [0; 10];
    for v in values {
        let bin = ((v * 10.0).floor().max(0.0) as usize).min(9);
        h[bin] += 1;
    }
    h
}
