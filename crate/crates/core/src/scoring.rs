//! Per-video error normalization, F1 threshold sweeps and clip flagging.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// How a clip score is compared against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionRule {
    /// Flag when `score >= threshold`.
    #[default]
    AtLeast,
    /// Flag when `score > threshold`.
    StrictlyAbove,
}

impl DecisionRule {
    pub fn flags(self, score: f64, threshold: f64) -> bool {
        match self {
            DecisionRule::AtLeast => score >= threshold,
            DecisionRule::StrictlyAbove => score > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub video_id: String,
    pub raw_errors: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(video_id: impl Into<String>, raw_errors: Vec<f64>) -> Result<Self> {
        let normalized = normalize_errors(&raw_errors)?;
        Ok(ScoreSeries {
            video_id: video_id.into(),
            raw_errors,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.raw_errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub predictions: Vec<u8>,
}

/// Min-max scaling into [0, 1]. A flat series maps to all zeros.
pub fn normalize_errors(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::validation("cannot normalize an empty error series"));
    }
    if raw.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric(
            "reconstruction error series contains non-finite values".to_string(),
        ));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw
        .iter()
        .map(|e| ((e - min) / range).clamp(0.0, 1.0))
        .collect())
}

fn check_labels(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::validation(format!("label {l} is not 0 or 1")));
    }
    Ok(())
}

pub fn apply_threshold(scores: &[f64], threshold: f64, rule: DecisionRule) -> Vec<u8> {
    scores
        .iter()
        .map(|&s| u8::from(rule.flags(s, threshold)))
        .collect()
}

fn evaluate(scores: &[f64], labels: &[u8], t: f64, rule: DecisionRule) -> ThresholdResult {
    let predictions = apply_threshold(scores, t, rule);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    // 2PR/(P+R) written over counts, so equal confusion counts give equal bits
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    ThresholdResult {
        threshold: t,
        f1,
        precision,
        recall,
        predictions,
    }
}

pub fn f1_at_threshold(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
    rule: DecisionRule,
) -> Result<ThresholdResult> {
    check_labels(scores, labels)?;
    Ok(evaluate(scores, labels, threshold, rule))
}

/// Sweeps the observed score values plus 0 and 1 and keeps the threshold
/// with the best F1, preferring the smallest on ties.
pub fn select_threshold(scores: &[f64], labels: &[u8], rule: DecisionRule) -> Result<ThresholdResult> {
    if scores.is_empty() {
        return Err(Error::validation("cannot select a threshold for an empty series"));
    }
    check_labels(scores, labels)?;
    let mut candidates: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<ThresholdResult> = None;
    for t in candidates {
        let r = evaluate(scores, labels, t, rule);
        if best.as_ref().is_none_or(|b| r.f1 > b.f1) {
            best = Some(r);
        }
    }
    Ok(best.expect("candidate set is never empty"))
}

/// q-th percentile with linear interpolation between order statistics.
pub fn percentile_threshold(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("cannot take a percentile of no values"));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::config(format!("percentile {q} is outside (0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub video_id: String,
    pub clip_index: usize,
    pub raw_error: f64,
    pub normalized_error: f64,
    pub prediction: u8,
    pub label: Option<u8>,
}

/// Rows for one scored video.
pub fn score_rows(series: &ScoreSeries, predictions: &[u8], labels: Option<&[u8]>) -> Vec<ScoreRow> {
    (0..series.len())
        .map(|i| ScoreRow {
            video_id: series.video_id.clone(),
            clip_index: i,
            raw_error: series.raw_errors[i],
            normalized_error: series.normalized[i],
            prediction: predictions[i],
            label: labels.map(|l| l[i]),
        })
        .collect()
}

/// Writes the per-clip score table. The label column is left empty for
/// unlabeled videos.
pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::csv(path, e);
    w.write_record([
        "video_id",
        "clip_index",
        "raw_error",
        "normalized_error",
        "prediction",
        "label",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.video_id.clone(),
            r.clip_index.to_string(),
            r.raw_error.to_string(),
            r.normalized_error.to_string(),
            r.prediction.to_string(),
            r.label.map(|l| l.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}
