//! ROC/AUC, confusion counts, the modality ablation runner and report files.

pub mod ablation;
pub mod report;
pub mod roc;

pub use ablation::{
    dataset_hash, evaluate_config, evaluate_detector, run_ablation, AblationReport, ConfigResult,
    VideoThreshold,
};
pub use report::{emit_report, write_roc_csv, SUMMARY_FILE};
pub use roc::{roc_curve, RocCurve, RocPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ModalityConfig;
    use crate::detector::DetectorSettings;
    use crate::scoring::{DecisionRule, ScoreRow};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[1, 0], &[1, 0]).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(confusion(&[1; 5], &[0; 5]).unwrap().fp, 5);
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn confusion_matches_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let l: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let m = confusion(&p, &l).unwrap();
        let count = |a: u8, b: u8| (0..100).filter(|&i| p[i] == a && l[i] == b).count();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (count(1, 1), count(1, 0), count(0, 0), count(0, 1)));
        assert_eq!(m.total(), 100);
    }

    fn entry(name: &str) -> ConfigResult {
        let roc = roc_curve(&[0.0, 1.0], &[0, 1]).unwrap();
        ConfigResult {
            config: ModalityConfig::VISION,
            name: name.to_string(),
            auc: roc.auc,
            best_f1: 1.0,
            best_threshold: 1.0,
            mean_video_f1: 1.0,
            n_clips: 2,
            n_anomalous: 1,
            final_train_loss: 0.25,
            roc,
            video_thresholds: vec![VideoThreshold {
                video_id: "t0".into(),
                threshold: 1.0,
                f1: 1.0,
            }],
            scores: vec![ScoreRow {
                video_id: "t0".into(),
                clip_index: 0,
                raw_error: 0.5,
                normalized_error: 0.0,
                prediction: 0,
                label: Some(0),
            }],
        }
    }

    fn report(entries: Vec<ConfigResult>) -> AblationReport {
        AblationReport {
            dataset_hash: "abc".into(),
            seed: 3,
            settings: DetectorSettings::default(),
            rule: DecisionRule::AtLeast,
            entries,
        }
    }

    fn listing(dir: &std::path::Path) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    }

    #[test]
    fn empty_report_has_no_csvs() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(vec![]), dir.path()).unwrap();
        assert_eq!(listing(dir.path()), vec!["summary.json"]);
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(v["configs"], serde_json::json!([]));
        assert_eq!(v["version"], 1);
    }

    #[test]
    fn one_config_and_deterministic_re_emit() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(vec![entry("vision+sensor")]);
        emit_report(&r, dir.path()).unwrap();
        assert_eq!(
            listing(dir.path()),
            vec!["roc_vision_sensor.csv", "scores_vision_sensor.csv", "summary.json"]
        );
        let first = std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        let roc = std::fs::read_to_string(dir.path().join("roc_vision_sensor.csv")).unwrap();
        assert_eq!(roc, "threshold,fpr,tpr\ninf,0,0\n1,0,1\n0,1,1\n");
        emit_report(&r, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap(), first);
    }

    #[test]
    fn duplicate_names_get_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(vec![entry("vision"), entry("vision")]), dir.path()).unwrap();
        assert_eq!(listing(dir.path()).len(), 5);
    }
}
