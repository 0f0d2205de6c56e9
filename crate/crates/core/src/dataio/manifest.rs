use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::formats::read_labels;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_FEATURE_WIDTH: usize = 768;
pub const CLIP_FRAMES: usize = 32;
pub const DEFAULT_FPS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Which modalities feed the fused vector. Vision is the base modality and
/// is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub use_vision: bool,
    pub use_sensor: bool,
    pub use_scenegraph: bool,
}

impl ModalityConfig {
    pub const VISION: ModalityConfig = ModalityConfig {
        use_vision: true,
        use_sensor: false,
        use_scenegraph: false,
    };
    pub const VISION_SENSOR: ModalityConfig = ModalityConfig {
        use_vision: true,
        use_sensor: true,
        use_scenegraph: false,
    };
    pub const VISION_SCENEGRAPH: ModalityConfig = ModalityConfig {
        use_vision: true,
        use_sensor: false,
        use_scenegraph: true,
    };
    pub const ALL: ModalityConfig = ModalityConfig {
        use_vision: true,
        use_sensor: true,
        use_scenegraph: true,
    };

    /// The four ablation arms in reporting order.
    pub fn ablation_arms() -> [ModalityConfig; 4] {
        [
            Self::VISION,
            Self::VISION_SENSOR,
            Self::VISION_SCENEGRAPH,
            Self::ALL,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_vision {
            return Err(Error::config("the vision modality cannot be disabled"));
        }
        Ok(())
    }

    pub fn is_vision_only(&self) -> bool {
        !self.use_sensor && !self.use_scenegraph
    }

    pub fn name(&self) -> &'static str {
        match (self.use_sensor, self.use_scenegraph) {
            (false, false) => "vision",
            (true, false) => "vision+sensor",
            (false, true) => "vision+sg",
            (true, true) => "all",
        }
    }

    /// True when every modality enabled here is also enabled in `available`.
    pub fn is_subset_of(&self, available: &ModalityConfig) -> bool {
        (!self.use_sensor || available.use_sensor)
            && (!self.use_scenegraph || available.use_scenegraph)
    }
}

impl Default for ModalityConfig {
    fn default() -> Self {
        ModalityConfig::VISION
    }
}

impl fmt::Display for ModalityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModalityConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vision" => Ok(Self::VISION),
            "vision+sensor" => Ok(Self::VISION_SENSOR),
            "vision+sg" | "vision+scenegraph" => Ok(Self::VISION_SCENEGRAPH),
            "all" | "vision+sensor+sg" => Ok(Self::ALL),
            other => Err(Error::config(format!(
                "unknown modality configuration {other:?} (expected vision, vision+sensor, vision+sg or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SceneGraphVocab {
    pub objects: Vec<String>,
    pub relations: Vec<String>,
}

impl SceneGraphVocab {
    pub fn flattened_len(&self) -> usize {
        self.objects.len() * self.relations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub split: Split,
    pub features_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenegraph_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    pub frame_count: usize,
    pub fps: f64,
}

impl VideoEntry {
    /// `floor(frame_count / 32)`; a trailing partial clip is dropped.
    pub fn clip_count(&self) -> usize {
        self.frame_count / CLIP_FRAMES
    }
}

fn default_feature_width() -> usize {
    DEFAULT_FEATURE_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(default = "default_feature_width")]
    pub feature_width: usize,
    #[serde(default)]
    pub sensor_channels: Vec<String>,
    #[serde(default)]
    pub vocab: SceneGraphVocab,
    pub modality_config: ModalityConfig,
    pub videos: Vec<VideoEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
    /// Ids dropped by `skip_incomplete`.
    #[serde(skip)]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip, with a warning, videos missing an enabled modality instead of failing.
    pub skip_incomplete: bool,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn video(&self, id: &str) -> Result<&VideoEntry> {
        self.videos
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::config(format!("no video with id {id:?} in manifest")))
    }

    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    /// Structural checks that need no file access.
    pub fn validate_structure(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::validation(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        self.modality_config.validate()?;
        if self.feature_width == 0 {
            return Err(Error::validation("feature_width must be positive"));
        }
        if self.modality_config.use_sensor && self.sensor_channels.is_empty() {
            return Err(Error::validation(
                "sensor modality enabled but no sensor_channels declared",
            ));
        }
        if self.modality_config.use_scenegraph
            && (self.vocab.objects.is_empty() || self.vocab.relations.is_empty())
        {
            return Err(Error::validation(
                "scene-graph modality enabled but the object/relation vocabulary is empty",
            ));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.id.as_str()) {
                return Err(Error::validation(format!("duplicate video id {:?}", v.id)));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                return Err(Error::validation(format!(
                    "video {:?} has non-positive fps {}",
                    v.id, v.fps
                )));
            }
        }
        Ok(())
    }

    /// Paths of enabled modalities that are missing from the entry or the disk.
    fn missing_inputs(&self, v: &VideoEntry) -> Vec<String> {
        let mut missing = Vec::new();
        let mut check = |label: &str, p: Option<&PathBuf>| match p {
            None => missing.push(format!("{label} path not set")),
            Some(p) => {
                let full = self.resolve(p);
                if !full.is_file() {
                    missing.push(format!("{label} file {} not found", full.display()));
                }
            }
        };
        check("features", Some(&v.features_path));
        if self.modality_config.use_sensor {
            check("sensor", v.sensor_path.as_ref());
        }
        if self.modality_config.use_scenegraph {
            check("scenegraph", v.scenegraph_path.as_ref());
        }
        if let Some(l) = &v.labels_path {
            check("labels", Some(l));
        }
        missing
    }
}

/// Reads and validates a manifest. Cross-file dimension checks happen in
/// [`super::load_video`]; here only file presence and the train-on-normal
/// contract (no anomalous label in a Train video) are enforced.
pub fn load_manifest(path: &Path, options: LoadOptions) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate_structure()?;

    let mut kept = Vec::with_capacity(manifest.videos.len());
    for v in std::mem::take(&mut manifest.videos) {
        let missing = manifest.missing_inputs(&v);
        if missing.is_empty() {
            kept.push(v);
        } else if options.skip_incomplete {
            log::warn!("skipping video {:?}: {}", v.id, missing.join("; "));
            manifest.skipped.push(v.id);
        } else {
            return Err(Error::validation(format!(
                "video {:?} is incomplete: {}",
                v.id,
                missing.join("; ")
            )));
        }
    }
    manifest.videos = kept;

    for v in manifest.videos_in(Split::Train) {
        if let Some(lp) = &v.labels_path {
            let labels = read_labels(&manifest.resolve(lp), &v.id)?;
            if let Some(i) = labels.labels.iter().position(|&l| l == 1) {
                return Err(Error::validation(format!(
                    "train video {:?} has an anomalous label at clip {i}; training data must contain only normal behaviour",
                    v.id
                )));
            }
        }
    }
    Ok(manifest)
}
