//! Dataset manifests and per-video modality files.

mod formats;
mod manifest;

pub use formats::{
    read_features, read_labels, read_scene_graph, read_sensor, write_features, write_labels,
    write_scene_graph, write_sensor, ClipFeatureSet, ClipLabels, SceneGraphMatrix, SensorLog,
};
pub use manifest::{
    load_manifest, DatasetManifest, LoadOptions, ModalityConfig, SceneGraphVocab, Split,
    VideoEntry, CLIP_FRAMES, DEFAULT_FEATURE_WIDTH, DEFAULT_FPS, MANIFEST_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::clip_windows;

/// Everything loaded for one video. Optional parts are present exactly when
/// the manifest enables the modality (labels: when a labels file is listed).
#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub entry: VideoEntry,
    pub features: ClipFeatureSet,
    pub sensor: Option<SensorLog>,
    pub scene_graph: Option<SceneGraphMatrix>,
    pub labels: Option<ClipLabels>,
}

impl VideoData {
    pub fn clip_count(&self) -> usize {
        self.features.clip_count()
    }

    /// Clip labels, treating a video without a labels file as all-normal.
    pub fn labels_or_normal(&self) -> Vec<u8> {
        self.labels
            .as_ref()
            .map(|l| l.labels.clone())
            .unwrap_or_else(|| vec![0; self.clip_count()])
    }
}

/// Loads every enabled modality of one video and checks that clip counts agree
/// with `floor(frame_count / 32)`. Nothing is truncated or padded.
pub fn load_video(manifest: &DatasetManifest, id: &str) -> Result<VideoData> {
    let entry = manifest.video(id)?.clone();
    let clips = entry.clip_count();
    let mismatch = |what: &str, n: usize| {
        Error::validation(format!(
            "video {id:?}: {what} has {n} clips but frame_count {} implies {clips}",
            entry.frame_count
        ))
    };

    let features = read_features(
        &manifest.resolve(&entry.features_path),
        id,
        manifest.feature_width,
    )?;
    if features.clip_count() != clips {
        return Err(mismatch("features file", features.clip_count()));
    }

    let sensor = if manifest.modality_config.use_sensor {
        let p = entry
            .sensor_path
            .as_ref()
            .ok_or_else(|| Error::validation(format!("video {id:?} has no sensor file")))?;
        Some(read_sensor(
            &manifest.resolve(p),
            id,
            &manifest.sensor_channels,
        )?)
    } else {
        None
    };

    let scene_graph = if manifest.modality_config.use_scenegraph {
        let p = entry
            .scenegraph_path
            .as_ref()
            .ok_or_else(|| Error::validation(format!("video {id:?} has no scene-graph file")))?;
        let sg = read_scene_graph(&manifest.resolve(p), id)?;
        if sg.clips.len() != clips {
            return Err(mismatch("scene graph", sg.clips.len()));
        }
        sg.validate(manifest.vocab.objects.len(), manifest.vocab.relations.len())?;
        Some(sg)
    } else {
        None
    };

    let labels = match &entry.labels_path {
        Some(p) => {
            let l = read_labels(&manifest.resolve(p), id)?;
            if l.labels.len() != clips {
                return Err(mismatch("labels file", l.labels.len()));
            }
            Some(l)
        }
        None => None,
    };

    Ok(VideoData {
        entry,
        features,
        sensor,
        scene_graph,
        labels,
    })
}

/// Clips whose time window contains no sensor sample.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub video_id: String,
    pub gaps: Vec<usize>,
}

impl AlignmentReport {
    pub fn is_aligned(&self) -> bool {
        self.gaps.is_empty()
    }
}

/// Lists every clip window that no sensor timestamp falls into.
pub fn validate_alignment(
    features: &ClipFeatureSet,
    sensor: &SensorLog,
    fps: f64,
) -> Result<AlignmentReport> {
    let frames = features.clip_count() * CLIP_FRAMES;
    let gaps = clip_windows(frames, fps)?
        .into_iter()
        .filter(|w| {
            let first = sensor.timestamps.partition_point(|&t| t < w.time_start);
            first >= sensor.timestamps.len() || sensor.timestamps[first] >= w.time_end
        })
        .map(|w| w.clip_index)
        .collect();
    Ok(AlignmentReport {
        video_id: features.video_id.clone(),
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::{Path, PathBuf};

    fn features(n: usize) -> ClipFeatureSet {
        ClipFeatureSet {
            video_id: "v".into(),
            vectors: vec![vec![0.0; 4]; n],
        }
    }

    fn sensor(ts: &[f64]) -> SensorLog {
        SensorLog {
            video_id: "v".into(),
            channel_names: vec!["a".into()],
            timestamps: ts.to_vec(),
            rows: ts.iter().map(|_| vec![0.0]).collect(),
        }
    }

    #[test]
    fn alignment_reports() {
        // 4 clips at 16 fps: windows of 2 s covering [0, 8)
        let full: Vec<f64> = (0..80).map(|i| i as f64 * 0.1).collect();
        assert!(validate_alignment(&features(4), &sensor(&full), 16.0)
            .unwrap()
            .is_aligned());

        let half: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        assert_eq!(
            validate_alignment(&features(4), &sensor(&half), 16.0).unwrap().gaps,
            vec![2, 3]
        );

        assert!(validate_alignment(&features(1), &sensor(&[1.0]), 16.0)
            .unwrap()
            .is_aligned());
    }

    struct Fixture {
        _dir: tempfile::TempDir,
        root: PathBuf,
    }

    fn write(root: &Path, name: &str, body: &str) {
        std::fs::write(root.join(name), body).unwrap();
    }

    fn features_csv(rows: usize, width: usize) -> String {
        let mut s = String::from("clip_index");
        for i in 0..width {
            s += &format!(",f{i}");
        }
        s.push('\n');
        for r in 0..rows {
            s += &r.to_string();
            for _ in 0..width {
                s += ",0.5";
            }
            s.push('\n');
        }
        s
    }

    fn fixture(manifest: serde_json::Value) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        write(&root, "manifest.json", &manifest.to_string());
        Fixture { _dir: dir, root }
    }

    fn vision_manifest(videos: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "feature_width": 4,
            "modality_config": {"use_vision": true, "use_sensor": false, "use_scenegraph": false},
            "videos": videos,
        })
    }

    #[test]
    fn minimal_vision_only_manifest() {
        let fx = fixture(vision_manifest(serde_json::json!([
            {"id": "a", "split": "train", "features_path": "a.csv", "frame_count": 64, "fps": 15.0}
        ])));
        write(&fx.root, "a.csv", &features_csv(2, 4));
        let m = load_manifest(&fx.root.join("manifest.json"), LoadOptions::default()).unwrap();
        assert_eq!(m.videos.len(), 1);
        assert!(m.videos[0].sensor_path.is_none() && m.videos[0].scenegraph_path.is_none());
        let v = load_video(&m, "a").unwrap();
        assert_eq!(v.clip_count(), 2);
        assert!(v.sensor.is_none() && v.scene_graph.is_none() && v.labels.is_none());
    }

    #[test]
    fn feature_count_must_match_frame_count() {
        let fx = fixture(vision_manifest(serde_json::json!([
            {"id": "a", "split": "test", "features_path": "a.csv", "frame_count": 64, "fps": 15.0}
        ])));
        write(&fx.root, "a.csv", &features_csv(3, 4));
        let m = load_manifest(&fx.root.join("manifest.json"), LoadOptions::default()).unwrap();
        let err = load_video(&m, "a").unwrap_err();
        assert!(err.to_string().contains("3 clips"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let fx = fixture(vision_manifest(serde_json::json!([
            {"id": "a", "split": "train", "features_path": "a.csv", "frame_count": 64, "fps": 15.0},
            {"id": "a", "split": "test", "features_path": "a.csv", "frame_count": 64, "fps": 15.0}
        ])));
        write(&fx.root, "a.csv", &features_csv(2, 4));
        let err = load_manifest(&fx.root.join("manifest.json"), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn anomalous_train_video_rejected() {
        let fx = fixture(vision_manifest(serde_json::json!([
            {"id": "a", "split": "train", "features_path": "a.csv", "labels_path": "a_labels.csv",
             "frame_count": 64, "fps": 15.0}
        ])));
        write(&fx.root, "a.csv", &features_csv(2, 4));
        write(&fx.root, "a_labels.csv", "clip_index,label\n0,0\n1,1\n");
        let err = load_manifest(&fx.root.join("manifest.json"), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("only normal"), "{err}");
    }

    #[test]
    fn incomplete_video_error_or_skip() {
        let fx = fixture(serde_json::json!({
            "version": 1,
            "feature_width": 4,
            "sensor_channels": ["torque_0"],
            "modality_config": {"use_vision": true, "use_sensor": true, "use_scenegraph": false},
            "videos": [
                {"id": "a", "split": "train", "features_path": "a.csv", "sensor_path": "a_s.csv",
                 "frame_count": 32, "fps": 16.0},
                {"id": "b", "split": "test", "features_path": "a.csv", "sensor_path": "missing.csv",
                 "frame_count": 32, "fps": 16.0}
            ]
        }));
        write(&fx.root, "a.csv", &features_csv(1, 4));
        write(&fx.root, "a_s.csv", "timestamp_s,torque_0\n0.0,1.0\n1.0,2.0\n");
        let path = fx.root.join("manifest.json");
        assert!(load_manifest(&path, LoadOptions::default()).is_err());
        let m = load_manifest(&path, LoadOptions { skip_incomplete: true }).unwrap();
        assert_eq!(m.videos.len(), 1);
        assert_eq!(m.skipped, vec!["b".to_string()]);
        let v = load_video(&m, "a").unwrap();
        assert_eq!(v.sensor.unwrap().rows, vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn modality_tokens() {
        for arm in ModalityConfig::ablation_arms() {
            assert_eq!(arm.name().parse::<ModalityConfig>().unwrap(), arm);
        }
        assert!("sensor".parse::<ModalityConfig>().is_err());
    }
}
