//! CSV interchange for scored grasps and external predictions.
//!
//! Columns, in order:
//!
//! ```text
//! object_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,width,depth,
//! s_t,s_f1,s_f2,s_f,s_g_raw,s_g,s_c_raw,s_c,s_hybrid
//! ```
//!
//! The rotation is row-major (gripper → world); lengths are meters. Floats are written
//! in shortest round-trip decimal form, so reading a file back is bit-exact.
//!
//! Prediction files need the pose columns plus `predicted_score` (or, failing that,
//! `s_hybrid`); `object_id` is optional and other columns are ignored.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3};
use thiserror::Error;

use crate::eval::PredictedGrasp;
use crate::gripper::GraspPose;
use crate::metrics::ScoreBreakdown;

pub const POSE_COLUMNS: [&str; 14] =
    ["r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "tx", "ty", "tz", "width", "depth"];

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
    #[error("SchemaError at line {line}: {message}")]
    Schema { line: u64, message: String },
}

fn schema(line: u64, message: impl Into<String>) -> LabelError {
    LabelError::Schema { line, message: message.into() }
}

/// One scored grasp on one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspRecord<'a> {
    pub object_id: &'a str,
    pub pose: GraspPose,
    pub breakdown: ScoreBreakdown,
}

/// Owned form returned by [`read_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct OwnedGraspRecord {
    pub object_id: String,
    pub pose: GraspPose,
    pub breakdown: ScoreBreakdown,
}

impl OwnedGraspRecord {
    pub fn as_record(&self) -> GraspRecord<'_> {
        GraspRecord { object_id: &self.object_id, pose: self.pose, breakdown: self.breakdown }
    }
}

pub fn header() -> Vec<&'static str> {
    let mut h = vec!["object_id"];
    h.extend(POSE_COLUMNS);
    h.extend(ScoreBreakdown::FIELDS);
    h
}

fn pose_values(pose: &GraspPose) -> [f64; 14] {
    let r = pose.rotation.matrix();
    let t = pose.translation;
    [
        r[(0, 0)], r[(0, 1)], r[(0, 2)],
        r[(1, 0)], r[(1, 1)], r[(1, 2)],
        r[(2, 0)], r[(2, 1)], r[(2, 2)],
        t.x, t.y, t.z, pose.width, pose.depth,
    ]
}

/// Writes a header and one line per record; returns the number of records.
pub fn write_labels_to<'a, W: Write>(
    records: impl IntoIterator<Item = GraspRecord<'a>>,
    out: W,
) -> Result<usize, LabelError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header()).map_err(csv_io)?;
    let mut count = 0;
    let mut row: Vec<String> = Vec::with_capacity(24);
    for rec in records {
        row.clear();
        row.push(rec.object_id.to_string());
        row.extend(pose_values(&rec.pose).iter().map(|v| v.to_string()));
        row.extend(rec.breakdown.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_io)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

pub fn write_labels<'a>(
    records: impl IntoIterator<Item = GraspRecord<'a>>,
    path: &Path,
) -> Result<usize, LabelError> {
    write_labels_to(records, io::BufWriter::new(File::create(path)?))
}

fn csv_io(e: csv::Error) -> LabelError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabelError::Io(io),
        other => LabelError::Io(io::Error::other(format!("{other:?}"))),
    }
}

/// Column positions resolved from a header line.
struct Columns {
    width: usize,
    object_id: Option<usize>,
    pose: [usize; 14],
    breakdown: Option<[usize; 9]>,
    score: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord) -> Result<Self, LabelError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let mut pose = [0; 14];
        for (slot, name) in pose.iter_mut().zip(POSE_COLUMNS) {
            *slot = find(name).ok_or_else(|| schema(1, format!("missing column {name}")))?;
        }
        let mut breakdown = [0; 9];
        let mut have_all = true;
        for (slot, name) in breakdown.iter_mut().zip(ScoreBreakdown::FIELDS) {
            match find(name) {
                Some(i) => *slot = i,
                None => have_all = false,
            }
        }
        Ok(Self {
            width: headers.len(),
            object_id: find("object_id"),
            pose,
            breakdown: have_all.then_some(breakdown),
            score: find("predicted_score").or_else(|| find("s_hybrid")),
        })
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, LabelError> {
    let file = File::open(path)?;
    Ok(csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(file))
}

fn field(rec: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<f64, LabelError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| schema(line, format!("{name}: cannot parse {raw:?} as a number")))?;
    if !v.is_finite() {
        return Err(schema(line, format!("{name}: value {raw} is not finite")));
    }
    Ok(v)
}

fn rows(
    path: &Path,
) -> Result<(Columns, impl Iterator<Item = Result<(u64, csv::StringRecord), LabelError>>), LabelError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    let cols = Columns::resolve(&headers)?;
    let width = cols.width;
    let iter = rdr.into_records().map(move |r| {
        let rec = r.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            schema(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(schema(line, format!("expected {width} fields, found {}", rec.len())));
        }
        Ok((line, rec))
    });
    Ok((cols, iter))
}

fn parse_pose(cols: &Columns, rec: &csv::StringRecord, line: u64) -> Result<GraspPose, LabelError> {
    let mut v = [0.0; 14];
    for (i, name) in POSE_COLUMNS.iter().enumerate() {
        v[i] = field(rec, cols.pose[i], line, name)?;
    }
    let r = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
    GraspPose::new(r, Point3::new(v[9], v[10], v[11]), v[12], v[13]).map_err(|e| schema(line, e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<OwnedGraspRecord>, LabelError> {
    let (cols, iter) = rows(path)?;
    let Some(bcols) = cols.breakdown else {
        return Err(schema(1, "missing score columns"));
    };
    let mut out = Vec::new();
    for row in iter {
        let (line, rec) = row?;
        let pose = parse_pose(&cols, &rec, line)?;
        let mut b = [0.0; 9];
        for (i, name) in ScoreBreakdown::FIELDS.iter().enumerate() {
            b[i] = field(&rec, bcols[i], line, name)?;
        }
        let object_id = cols.object_id.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        out.push(OwnedGraspRecord { object_id, pose, breakdown: ScoreBreakdown::from_values(b) });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictedGrasp>, LabelError> {
    let (cols, iter) = rows(path)?;
    let Some(score_col) = cols.score else {
        return Err(schema(1, "missing column predicted_score"));
    };
    let mut out = Vec::new();
    for row in iter {
        let (line, rec) = row?;
        let grasp = parse_pose(&cols, &rec, line)?;
        let predicted_score = field(&rec, score_col, line, "predicted_score")?;
        let object_id = cols
            .object_id
            .and_then(|i| rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        out.push(PredictedGrasp { grasp, predicted_score, object_id });
    }
    Ok(out)
}
