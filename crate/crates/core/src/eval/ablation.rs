use serde::{Deserialize, Serialize};

use super::roc::{roc_curve, RocCurve};
use crate::dataio::{DatasetManifest, ModalityConfig, Split};
use crate::detector::{Detector, DetectorSettings};
use crate::error::{Error, Result};
use crate::fusion::{build_fused_dataset, FusedDataset};
use crate::scoring::{score_rows, select_threshold, DecisionRule, ScoreRow};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoThreshold {
    pub video_id: String,
    pub threshold: f64,
    pub f1: f64,
}

/// Test-split results of one modality configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub config: ModalityConfig,
    pub name: String,
    pub auc: f64,
    /// Best F1 over the pooled, per-video normalized scores.
    pub best_f1: f64,
    pub best_threshold: f64,
    /// Mean of the per-video oracle F1 over videos containing anomalies.
    pub mean_video_f1: f64,
    /// Clips entering the ROC pool.
    pub n_clips: usize,
    pub n_anomalous: usize,
    pub final_train_loss: f64,
    pub roc: RocCurve,
    pub video_thresholds: Vec<VideoThreshold>,
    pub scores: Vec<ScoreRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub dataset_hash: String,
    pub seed: u64,
    pub settings: DetectorSettings,
    pub rule: DecisionRule,
    pub entries: Vec<ConfigResult>,
}

/// Hash of the canonical manifest serialization. Independent of where the
/// dataset lives on disk.
pub fn dataset_hash(manifest: &DatasetManifest) -> Result<String> {
    let bytes = serde_json::to_vec(manifest)
        .map_err(|e| Error::Numeric(format!("manifest does not serialize: {e}")))?;
    Ok(sha256_hex(&bytes))
}

/// Fuses, trains on the Train split and scores the Test split under one
/// configuration.
pub fn evaluate_config(
    manifest: &DatasetManifest,
    config: &ModalityConfig,
    settings: &DetectorSettings,
    rule: DecisionRule,
) -> Result<ConfigResult> {
    let dataset = build_fused_dataset(manifest, config, &settings.fusion)?;
    let detector = Detector::fit(&dataset, settings)?;
    evaluate_detector(&detector, &dataset, rule)
}

/// Scores the Test split of an already fused dataset. ROC and pooled F1 use
/// the videos that contain at least one anomalous clip.
pub fn evaluate_detector(
    detector: &Detector,
    dataset: &FusedDataset,
    rule: DecisionRule,
) -> Result<ConfigResult> {
    let config = &dataset.config;
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut video_thresholds = Vec::new();
    let mut rows = Vec::new();
    for video in dataset.split(Split::Test) {
        let series = detector.score(video)?;
        let choice = select_threshold(&series.normalized, &video.labels, rule)?;
        rows.extend(score_rows(&series, &choice.predictions, Some(&video.labels)));
        if video.has_anomaly() {
            pooled_scores.extend_from_slice(&series.normalized);
            pooled_labels.extend_from_slice(&video.labels);
            video_thresholds.push(VideoThreshold {
                video_id: video.video_id.clone(),
                threshold: choice.threshold,
                f1: choice.f1,
            });
        }
    }
    if video_thresholds.is_empty() {
        return Err(Error::validation(
            "the Test split has no video with an anomalous clip; AUC undefined",
        ));
    }
    let roc = roc_curve(&pooled_scores, &pooled_labels)?;
    let best = select_threshold(&pooled_scores, &pooled_labels, rule)?;
    let mean_video_f1 =
        video_thresholds.iter().map(|v| v.f1).sum::<f64>() / video_thresholds.len() as f64;
    log::info!("{config}: AUC {:.4}, pooled F1 {:.4}", roc.auc, best.f1);

    Ok(ConfigResult {
        config: *config,
        name: config.name().to_string(),
        auc: roc.auc,
        best_f1: best.f1,
        best_threshold: best.threshold,
        mean_video_f1,
        n_clips: pooled_labels.len(),
        n_anomalous: pooled_labels.iter().filter(|&&l| l == 1).count(),
        final_train_loss: detector.model.loss_history.last().copied().unwrap_or(f64::NAN),
        roc,
        video_thresholds,
        scores: rows,
    })
}

/// Evaluates every configuration on the same data split with the same seed,
/// so entries differ only through the modalities they fuse.
pub fn run_ablation(
    manifest: &DatasetManifest,
    configs: &[ModalityConfig],
    settings: &DetectorSettings,
    rule: DecisionRule,
) -> Result<AblationReport> {
    for c in configs {
        c.validate()?;
        if !c.is_subset_of(&manifest.modality_config) {
            return Err(Error::config(format!(
                "configuration {c} needs a modality the manifest does not provide ({})",
                manifest.modality_config
            )));
        }
    }
    let entries = configs
        .iter()
        .map(|c| evaluate_config(manifest, c, settings, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport {
        dataset_hash: dataset_hash(manifest)?,
        seed: settings.train.seed,
        settings: settings.clone(),
        rule,
        entries,
    })
}
