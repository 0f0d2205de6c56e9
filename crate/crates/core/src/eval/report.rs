use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::ablation::{AblationReport, VideoThreshold};
use super::roc::RocCurve;
use crate::detector::DetectorSettings;
use crate::error::{Error, Result};
use crate::scoring::{write_scores_csv, DecisionRule};
use crate::util::{write_atomic, write_json_atomic};

pub const REPORT_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Serialize)]
struct SummaryEntry<'a> {
    name: &'a str,
    auc: f64,
    best_f1: f64,
    best_threshold: f64,
    mean_video_f1: f64,
    n_clips: usize,
    n_anomalous: usize,
    final_train_loss: f64,
    roc_csv: String,
    scores_csv: String,
    video_thresholds: &'a [VideoThreshold],
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    version: u32,
    dataset_hash: &'a str,
    seed: u64,
    settings: &'a DetectorSettings,
    rule: DecisionRule,
    configs: Vec<SummaryEntry<'a>>,
}

/// File-name stem for a configuration name, e.g. `vision+sg` -> `vision_sg`.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn write_roc_csv(path: &Path, roc: &RocCurve) -> Result<()> {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &roc.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    write_atomic(path, out.as_bytes())
}

/// Writes `summary.json` plus one ROC and one score CSV per configuration.
/// Returns the written paths, summary first.
pub fn emit_report(report: &AblationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut configs = Vec::with_capacity(report.entries.len());
    for entry in &report.entries {
        let base = slug(&entry.name);
        let n = seen.entry(base.clone()).or_insert(0);
        *n += 1;
        let stem = if *n == 1 { base } else { format!("{base}_{n}") };
        let roc_csv = format!("roc_{stem}.csv");
        let scores_csv = format!("scores_{stem}.csv");
        write_roc_csv(&out_dir.join(&roc_csv), &entry.roc)?;
        write_scores_csv(&out_dir.join(&scores_csv), &entry.scores)?;
        written.push(out_dir.join(&roc_csv));
        written.push(out_dir.join(&scores_csv));
        configs.push(SummaryEntry {
            name: &entry.name,
            auc: entry.auc,
            best_f1: entry.best_f1,
            best_threshold: entry.best_threshold,
            mean_video_f1: entry.mean_video_f1,
            n_clips: entry.n_clips,
            n_anomalous: entry.n_anomalous,
            final_train_loss: entry.final_train_loss,
            roc_csv,
            scores_csv,
            video_thresholds: &entry.video_thresholds,
        });
    }
    let summary = Summary {
        version: REPORT_VERSION,
        dataset_hash: &report.dataset_hash,
        seed: report.seed,
        settings: &report.settings,
        rule: report.rule,
        configs,
    };
    let path = out_dir.join(SUMMARY_FILE);
    write_json_atomic(&path, &summary)?;
    written.insert(0, path);
    Ok(written)
}
