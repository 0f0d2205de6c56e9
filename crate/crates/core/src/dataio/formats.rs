//! Readers and writers for the per-video files.
//!
//! - features CSV: `clip_index,f0..f{W-1}`
//! - sensor CSV: `timestamp_s,<channel names...>`
//! - labels CSV: `clip_index,label`
//! - scene graph JSON: list over clips of `objects x relations` arrays
//!
//! Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFeatureSet {
    pub video_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl ClipFeatureSet {
    pub fn clip_count(&self) -> usize {
        self.vectors.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLog {
    pub video_id: String,
    pub channel_names: Vec<String>,
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl SensorLog {
    pub fn channel_count(&self) -> usize {
        self.channel_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.rows.len() {
            return Err(Error::validation(format!(
                "sensor log {:?}: {} timestamps but {} rows",
                self.video_id,
                self.timestamps.len(),
                self.rows.len()
            )));
        }
        let width = self.channel_count();
        for (i, (t, row)) in self.timestamps.iter().zip(&self.rows).enumerate() {
            if row.len() != width {
                return Err(Error::validation(format!(
                    "sensor log {:?}: row {i} has {} channels, expected {width}",
                    self.video_id,
                    row.len()
                )));
            }
            if !t.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "sensor log {:?}: non-finite value in row {i}",
                    self.video_id
                )));
            }
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::validation(format!(
                "sensor log {:?}: timestamps not strictly increasing at row {}",
                self.video_id,
                i + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraphMatrix {
    pub video_id: String,
    /// Per clip, an `objects x relations` score matrix with entries in [0, 1].
    pub clips: Vec<Vec<Vec<f64>>>,
}

impl SceneGraphMatrix {
    pub fn validate(&self, objects: usize, relations: usize) -> Result<()> {
        for (c, m) in self.clips.iter().enumerate() {
            if m.len() != objects || m.iter().any(|r| r.len() != relations) {
                return Err(Error::validation(format!(
                    "scene graph {:?}: clip {c} is not a {objects}x{relations} matrix",
                    self.video_id
                )));
            }
            for (o, row) in m.iter().enumerate() {
                if let Some(r) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::validation(format!(
                        "scene graph {:?}: clip {c} entry ({o}, {r}) = {} lies outside [0, 1]",
                        self.video_id, row[r]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipLabels {
    pub video_id: String,
    /// 1 marks an anomalous clip.
    pub labels: Vec<u8>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        Error::validation(format!(
            "{}: record {line}: {field:?} is not a number",
            path.display()
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::validation(format!(
            "{}: record {line}: non-finite value",
            path.display()
        )));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: usize, field: &str, expected: usize) -> Result<()> {
    let idx: usize = field.trim().parse().map_err(|_| {
        Error::validation(format!(
            "{}: record {line}: bad clip_index {field:?}",
            path.display()
        ))
    })?;
    if idx != expected {
        return Err(Error::validation(format!(
            "{}: clip_index {idx} found where {expected} was expected",
            path.display()
        )));
    }
    Ok(())
}

pub fn read_features(path: &Path, video_id: &str, width: usize) -> Result<ClipFeatureSet> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let expected: Vec<String> = std::iter::once("clip_index".to_string())
        .chain((0..width).map(|i| format!("f{i}")))
        .collect();
    if headers.len() != expected.len() || headers.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::validation(format!(
            "{}: feature header must be clip_index,f0..f{} ({} columns), found {} columns",
            path.display(),
            width - 1,
            width + 1,
            headers.len()
        )));
    }
    let mut vectors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != width + 1 {
            return Err(Error::validation(format!(
                "{}: clip {i} has {} feature values, expected {width}",
                path.display(),
                rec.len().saturating_sub(1)
            )));
        }
        parse_index(path, i, &rec[0], i)?;
        let row = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(path, i, f))
            .collect::<Result<Vec<_>>>()?;
        vectors.push(row);
    }
    Ok(ClipFeatureSet {
        video_id: video_id.to_string(),
        vectors,
    })
}

pub fn write_features(path: &Path, set: &ClipFeatureSet, width: usize) -> Result<()> {
    let mut out = String::from("clip_index");
    for i in 0..width {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for (i, v) in set.vectors.iter().enumerate() {
        if v.len() != width {
            return Err(Error::shape(format!(
                "clip {i} has {} features, expected {width}",
                v.len()
            )));
        }
        let _ = write!(out, "{i}");
        for x in v {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a sensor log; `channel_names` must match the header after `timestamp_s`.
pub fn read_sensor(path: &Path, video_id: &str, channel_names: &[String]) -> Result<SensorLog> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let header_ok = headers.len() == channel_names.len() + 1
        && &headers[0] == "timestamp_s"
        && headers.iter().skip(1).zip(channel_names).all(|(a, b)| a == b);
    if !header_ok {
        return Err(Error::validation(format!(
            "{}: sensor header must be timestamp_s,{}",
            path.display(),
            channel_names.join(",")
        )));
    }
    let mut timestamps = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != channel_names.len() + 1 {
            return Err(Error::validation(format!(
                "{}: sensor row {i} has {} fields, expected {}",
                path.display(),
                rec.len(),
                channel_names.len() + 1
            )));
        }
        timestamps.push(parse_f64(path, i, &rec[0])?);
        rows.push(
            rec.iter()
                .skip(1)
                .map(|f| parse_f64(path, i, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let log = SensorLog {
        video_id: video_id.to_string(),
        channel_names: channel_names.to_vec(),
        timestamps,
        rows,
    };
    log.validate()?;
    Ok(log)
}

pub fn write_sensor(path: &Path, log: &SensorLog) -> Result<()> {
    log.validate()?;
    let mut out = String::from("timestamp_s");
    for c in &log.channel_names {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (t, row) in log.timestamps.iter().zip(&log.rows) {
        let _ = write!(out, "{t}");
        for x in row {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_labels(path: &Path, video_id: &str) -> Result<ClipLabels> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "clip_index" || &headers[1] != "label" {
        return Err(Error::validation(format!(
            "{}: labels header must be clip_index,label",
            path.display()
        )));
    }
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != 2 {
            return Err(Error::validation(format!(
                "{}: label row {i} must have 2 fields",
                path.display()
            )));
        }
        parse_index(path, i, &rec[0], i)?;
        let label = match rec[1].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::validation(format!(
                    "{}: label {other:?} at clip {i} is not 0 or 1",
                    path.display()
                )))
            }
        };
        labels.push(label);
    }
    Ok(ClipLabels {
        video_id: video_id.to_string(),
        labels,
    })
}

pub fn write_labels(path: &Path, labels: &ClipLabels) -> Result<()> {
    let mut out = String::from("clip_index,label\n");
    for (i, l) in labels.labels.iter().enumerate() {
        if *l > 1 {
            return Err(Error::validation(format!("label {l} at clip {i} is not 0 or 1")));
        }
        let _ = writeln!(out, "{i},{l}");
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_scene_graph(path: &Path, video_id: &str) -> Result<SceneGraphMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let clips: Vec<Vec<Vec<f64>>> =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    Ok(SceneGraphMatrix {
        video_id: video_id.to_string(),
        clips,
    })
}

pub fn write_scene_graph(path: &Path, sg: &SceneGraphMatrix) -> Result<()> {
    let bytes = serde_json::to_vec(&sg.clips).map_err(|e| Error::json(path, e))?;
    write_atomic(path, &bytes)
}
