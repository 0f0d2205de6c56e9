//! Per-clip fusion of the three modalities into one vector.
//!
//! Segment order is fixed: vision, then pooled sensor channels, then the
//! flattened scene graph.

mod pooling;
mod standardize;
mod windows;

pub use pooling::{pool_clips, pool_sensor, PoolPolicy};
pub use standardize::{Standardizer, DEFAULT_STD_FLOOR};
pub use windows::{clip_windows, ClipWindow};

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{load_video, DatasetManifest, ModalityConfig, Split, VideoData};
use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Options governing how raw modalities become fused vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionOptions {
    pub pool_policy: PoolPolicy,
    /// Pool sensor magnitudes instead of signed values.
    pub pool_abs: bool,
    /// z-score fused vectors with a standardizer fitted on the Train split.
    pub standardize: bool,
}

impl Default for FusionOptions {
    fn default() -> Self {
        FusionOptions {
            pool_policy: PoolPolicy::Error,
            pool_abs: false,
            standardize: true,
        }
    }
}

/// Row-major, object-major flattening of one clip's scene-graph matrix.
pub fn flatten_scene_graph(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(matrix.iter().map(Vec::len).sum());
    for (o, row) in matrix.iter().enumerate() {
        for (r, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!(
                    "scene-graph entry ({o}, {r}) = {v} lies outside [0, 1]"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Concatenates `vision ‖ sensor ‖ scene graph`. A segment must be present
/// exactly when the configuration enables it.
pub fn fuse(
    vision: &[f64],
    sensor: Option<&[f64]>,
    scene_graph: Option<&[f64]>,
    config: &ModalityConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if sensor.is_some() != config.use_sensor {
        return Err(Error::config(format!(
            "sensor segment {} but configuration {config} {} it",
            if sensor.is_some() { "supplied" } else { "missing" },
            if config.use_sensor { "enables" } else { "disables" },
        )));
    }
    if scene_graph.is_some() != config.use_scenegraph {
        return Err(Error::config(format!(
            "scene-graph segment {} but configuration {config} {} it",
            if scene_graph.is_some() { "supplied" } else { "missing" },
            if config.use_scenegraph { "enables" } else { "disables" },
        )));
    }
    let mut out = Vec::with_capacity(
        vision.len() + sensor.map_or(0, <[f64]>::len) + scene_graph.map_or(0, <[f64]>::len),
    );
    out.extend_from_slice(vision);
    if let Some(s) = sensor {
        out.extend_from_slice(s);
    }
    if let Some(g) = scene_graph {
        out.extend_from_slice(g);
    }
    Ok(out)
}

/// Offsets of each segment inside a fused vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    pub vision: Range<usize>,
    pub sensor: Option<Range<usize>>,
    pub scene_graph: Option<Range<usize>>,
}

impl SegmentLayout {
    pub fn new(
        config: &ModalityConfig,
        feature_width: usize,
        sensor_channels: usize,
        scene_graph_len: usize,
    ) -> Self {
        let vision = 0..feature_width;
        let mut end = feature_width;
        let sensor = config.use_sensor.then(|| {
            let r = end..end + sensor_channels;
            end = r.end;
            r
        });
        let scene_graph = config
            .use_scenegraph
            .then(|| end..end + scene_graph_len);
        SegmentLayout {
            vision,
            sensor,
            scene_graph,
        }
    }

    pub fn for_manifest(manifest: &DatasetManifest, config: &ModalityConfig) -> Self {
        SegmentLayout::new(
            config,
            manifest.feature_width,
            manifest.sensor_channels.len(),
            manifest.vocab.flattened_len(),
        )
    }

    pub fn width(&self) -> usize {
        [
            Some(&self.vision),
            self.sensor.as_ref(),
            self.scene_graph.as_ref(),
        ]
        .into_iter()
        .flatten()
        .map(|r| r.end)
        .max()
        .unwrap_or(0)
    }
}

/// Fused (not yet standardized) vectors of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedVideo {
    pub video_id: String,
    pub split: Split,
    pub vectors: Vec<Vec<f64>>,
    /// Clip labels; all zero when the video has no labels file.
    pub labels: Vec<u8>,
}

impl FusedVideo {
    pub fn has_anomaly(&self) -> bool {
        self.labels.contains(&1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDataset {
    pub config: ModalityConfig,
    pub layout: SegmentLayout,
    pub videos: Vec<FusedVideo>,
}

impl FusedDataset {
    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &FusedVideo> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn train_vectors(&self) -> Vec<Vec<f64>> {
        self.split(Split::Train)
            .flat_map(|v| v.vectors.iter().cloned())
            .collect()
    }

    /// Applies `s` to every vector in place.
    pub fn standardize_with(&mut self, s: &Standardizer) -> Result<()> {
        for v in &mut self.videos {
            for x in &mut v.vectors {
                *x = s.apply(x)?;
            }
        }
        Ok(())
    }
}

/// Fuses every clip of one loaded video under `config`.
pub fn fuse_video(
    data: &VideoData,
    config: &ModalityConfig,
    options: &FusionOptions,
) -> Result<FusedVideo> {
    config.validate()?;
    let windows = clip_windows(data.entry.frame_count, data.entry.fps)?;
    let pooled = if config.use_sensor {
        let log = data.sensor.as_ref().ok_or_else(|| {
            Error::validation(format!(
                "video {:?} has no sensor log but {config} needs one",
                data.entry.id
            ))
        })?;
        Some(pool_clips(log, &windows, options.pool_policy, options.pool_abs)?)
    } else {
        None
    };
    let graphs = if config.use_scenegraph {
        let sg = data.scene_graph.as_ref().ok_or_else(|| {
            Error::validation(format!(
                "video {:?} has no scene graph but {config} needs one",
                data.entry.id
            ))
        })?;
        Some(
            sg.clips
                .iter()
                .map(|m| flatten_scene_graph(m))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let vectors = data
        .features
        .vectors
        .iter()
        .enumerate()
        .map(|(i, vision)| {
            fuse(
                vision,
                pooled.as_ref().map(|p| p[i].as_slice()),
                graphs.as_ref().map(|g| g[i].as_slice()),
                config,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FusedVideo {
        video_id: data.entry.id.clone(),
        split: data.entry.split,
        vectors,
        labels: data.labels_or_normal(),
    })
}

/// Loads and fuses every video of a manifest under `config`.
pub fn build_fused_dataset(
    manifest: &DatasetManifest,
    config: &ModalityConfig,
    options: &FusionOptions,
) -> Result<FusedDataset> {
    config.validate()?;
    if !config.is_subset_of(&manifest.modality_config) {
        return Err(Error::config(format!(
            "configuration {config} needs a modality the manifest does not provide ({})",
            manifest.modality_config
        )));
    }
    let layout = SegmentLayout::for_manifest(manifest, config);
    let videos = manifest
        .videos
        .iter()
        .map(|v| fuse_video(&load_video(manifest, &v.id)?, config, options))
        .collect::<Result<Vec<_>>>()?;
    for v in &videos {
        if let Some(x) = v.vectors.iter().find(|x| x.len() != layout.width()) {
            return Err(Error::shape(format!(
                "video {:?} fused to width {}, expected {}",
                v.video_id,
                x.len(),
                layout.width()
            )));
        }
    }
    Ok(FusedDataset {
        config: *config,
        layout,
        videos,
    })
}

/// Writes a fused dataset as an inspection CSV:
/// `video_id,split,clip_index,label,v0..v{W-1}`.
pub fn write_fused_csv(path: &Path, dataset: &FusedDataset) -> Result<()> {
    let mut out = String::from("video_id,split,clip_index,label");
    for i in 0..dataset.width() {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for v in &dataset.videos {
        let split = match v.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        for (i, x) in v.vectors.iter().enumerate() {
            let _ = write!(out, "{},{split},{i},{}", v.video_id, v.labels[i]);
            for val in x {
                let _ = write!(out, ",{val}");
            }
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flatten_cases() {
        let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(flatten_scene_graph(&eye).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            flatten_scene_graph(&vec![vec![0.0; 3]; 4]).unwrap(),
            vec![0.0; 12]
        );
        // entry (o, r) lands at o * relations + r
        let m: Vec<Vec<f64>> = (0..3)
            .map(|o| (0..2).map(|r| (o * 2 + r) as f64 / 10.0).collect())
            .collect();
        let flat = flatten_scene_graph(&m).unwrap();
        assert_eq!(flat.len(), 6);
        for o in 0..3 {
            for r in 0..2 {
                assert_eq!(flat[o * 2 + r], m[o][r]);
            }
        }
        assert!(flatten_scene_graph(&[vec![1.5]]).is_err());
    }

    #[test]
    fn fuse_cases() {
        let vision = vec![0.25; 768];
        let out = fuse(&vision, None, None, &ModalityConfig::VISION).unwrap();
        assert_eq!(out, vision);

        let sensor = vec![1.0; 8];
        let sg = vec![0.5; 60];
        let all = fuse(&vision, Some(&sensor), Some(&sg), &ModalityConfig::ALL).unwrap();
        assert_eq!(all.len(), 768 + 8 + 60);
        assert_eq!(SegmentLayout::new(&ModalityConfig::ALL, 768, 8, 60).width(), 836);

        assert!(fuse(&vision, Some(&sensor), None, &ModalityConfig::VISION).is_err());
        assert!(fuse(&vision, None, None, &ModalityConfig::VISION_SENSOR).is_err());
    }

    proptest! {
        #[test]
        fn fuse_is_lossless(
            vision in prop::collection::vec(-5.0f64..5.0, 1..20),
            sensor in prop::collection::vec(-5.0f64..5.0, 0..10),
            sg in prop::collection::vec(0.0f64..=1.0, 0..12),
            use_sensor: bool,
            use_sg: bool,
        ) {
            let config = ModalityConfig { use_vision: true, use_sensor, use_scenegraph: use_sg };
            let out = fuse(
                &vision,
                use_sensor.then_some(sensor.as_slice()),
                use_sg.then_some(sg.as_slice()),
                &config,
            ).unwrap();
            let layout = SegmentLayout::new(&config, vision.len(), sensor.len(), sg.len());
            prop_assert_eq!(out.len(), layout.width());
            prop_assert_eq!(&out[layout.vision.clone()], vision.as_slice());
            if let Some(r) = layout.sensor.clone() {
                prop_assert_eq!(&out[r], sensor.as_slice());
            }
            if let Some(r) = layout.scene_graph.clone() {
                prop_assert_eq!(&out[r], sg.as_slice());
            }
        }

        #[test]
        fn clip_windows_follow_count_law(frames in 0usize..5000, fps in 1.0f64..60.0) {
            let w = clip_windows(frames, fps).unwrap();
            prop_assert_eq!(w.len(), frames / 32);
            for (i, win) in w.iter().enumerate() {
                prop_assert_eq!(win.frame_end - win.frame_start, 32);
                prop_assert_eq!(win.frame_start, 32 * i);
                prop_assert_eq!(win.time_start, win.frame_start as f64 / fps);
                prop_assert_eq!(win.time_end, win.frame_end as f64 / fps);
            }
        }
    }
}
