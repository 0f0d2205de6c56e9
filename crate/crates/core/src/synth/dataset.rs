use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::generate_episode;
use super::{AnomalyKind, AnomalySpec, ScenarioConfig};
use crate::dataio::{
    write_features, write_labels, write_scene_graph, write_sensor, DatasetManifest, ModalityConfig,
    SceneGraphVocab, Split, CLIP_FRAMES, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::util::{derive_seed, write_json_atomic};

pub const SPEC_FILE: &str = "spec.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Number of anomalous Test episodes per kind; one anomaly each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyMix {
    pub drop_cup: usize,
    pub torque_limit: usize,
    pub extra_person: usize,
    pub collision: usize,
}

impl Default for AnomalyMix {
    fn default() -> Self {
        AnomalyMix {
            drop_cup: 7,
            torque_limit: 5,
            extra_person: 3,
            collision: 2,
        }
    }
}

impl AnomalyMix {
    pub fn none() -> Self {
        AnomalyMix {
            drop_cup: 0,
            torque_limit: 0,
            extra_person: 0,
            collision: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.drop_cup + self.torque_limit + self.extra_person + self.collision
    }

    /// One kind per anomalous episode, grouped by kind.
    pub fn kinds(&self) -> Vec<AnomalyKind> {
        [
            (AnomalyKind::DropCup, self.drop_cup),
            (AnomalyKind::TorqueLimit, self.torque_limit),
            (AnomalyKind::ExtraPerson, self.extra_person),
            (AnomalyKind::Collision, self.collision),
        ]
        .iter()
        .flat_map(|&(k, n)| std::iter::repeat_n(k, n))
        .collect()
    }
}

/// Per-kind magnitude and inclusive duration range, in clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSettings {
    pub magnitude: f64,
    pub min_clips: usize,
    pub max_clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalySettings {
    pub drop_cup: KindSettings,
    pub torque_limit: KindSettings,
    pub extra_person: KindSettings,
    pub collision: KindSettings,
}

impl Default for AnomalySettings {
    fn default() -> Self {
        let k = |magnitude, min_clips, max_clips| KindSettings {
            magnitude,
            min_clips,
            max_clips,
        };
        AnomalySettings {
            drop_cup: k(0.6, 3, 4),
            torque_limit: k(25.0, 3, 4),
            extra_person: k(1.0, 2, 2),
            collision: k(1.0, 2, 3),
        }
    }
}

impl AnomalySettings {
    pub fn get(&self, kind: AnomalyKind) -> &KindSettings {
        match kind {
            AnomalyKind::DropCup => &self.drop_cup,
            AnomalyKind::TorqueLimit => &self.torque_limit,
            AnomalyKind::ExtraPerson => &self.extra_person,
            AnomalyKind::Collision => &self.collision,
        }
    }
}

/// Full description of a generated dataset; written as `spec.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_normal_train: usize,
    pub n_normal_test: usize,
    pub anomaly_mix: AnomalyMix,
    pub anomalies: AnomalySettings,
    /// Template for every episode. Its seeds are replaced per episode.
    pub scenario: ScenarioConfig,
    /// Each phase length varies by up to this many clips between episodes.
    pub phase_jitter: usize,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_normal_train: 55,
            n_normal_test: 0,
            anomaly_mix: AnomalyMix::default(),
            anomalies: AnomalySettings::default(),
            scenario: ScenarioConfig::default(),
            phase_jitter: 1,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub split: Split,
    pub episode_seed: u64,
    pub clips_per_phase: Vec<usize>,
    pub trailing_frames: usize,
    pub anomalies: Vec<AnomalySpec>,
}

impl EpisodeRecord {
    /// The template scenario specialised to this episode.
    pub fn scenario(&self, spec: &DatasetSpec) -> ScenarioConfig {
        ScenarioConfig {
            clips_per_phase: self.clips_per_phase.clone(),
            trailing_frames: self.trailing_frames,
            seed: spec.master_seed,
            episode_seed: self.episode_seed,
            ..spec.scenario.clone()
        }
    }
}

#[derive(Debug, Serialize)]
struct SpecFile<'a> {
    spec: &'a DatasetSpec,
    episodes: &'a [EpisodeRecord],
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        for kind in self.anomaly_mix.kinds() {
            let k = self.anomalies.get(kind);
            if k.min_clips == 0 || k.min_clips > k.max_clips {
                return Err(Error::config(format!("{kind}: invalid duration range")));
            }
            if !(k.magnitude.is_finite() && k.magnitude > 0.0) {
                return Err(Error::config(format!("{kind}: magnitude must be positive")));
            }
        }
        Ok(())
    }

    /// Decides every episode's layout, seed and anomaly placement.
    pub fn plan(&self) -> Result<Vec<EpisodeRecord>> {
        self.validate()?;
        let kinds = self.anomaly_mix.kinds();
        let mut episodes = Vec::new();
        let total = self.n_normal_train + self.n_normal_test + kinds.len();
        for i in 0..total {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.master_seed, "layout", i as u64));
            let jitter = self.phase_jitter as i64;
            let clips_per_phase: Vec<usize> = self
                .scenario
                .clips_per_phase
                .iter()
                .map(|&n| (n as i64 + rng.random_range(-jitter..=jitter)).max(1) as usize)
                .collect();
            let trailing_frames = rng.random_range(0..CLIP_FRAMES);
            let clip_count: usize = clips_per_phase.iter().sum();

            let (id, split, anomalies) = if i < self.n_normal_train {
                (format!("train_{i:03}"), Split::Train, vec![])
            } else {
                let t = i - self.n_normal_train;
                let anomalies = match kinds.get(t) {
                    Some(&kind) => {
                        let k = self.anomalies.get(kind);
                        let duration = rng.random_range(k.min_clips..=k.max_clips).min(clip_count);
                        // keep the first and last clip normal when there is room
                        let start = if clip_count >= duration + 2 {
                            rng.random_range(1..=clip_count - duration - 1)
                        } else {
                            rng.random_range(0..=clip_count - duration)
                        };
                        vec![AnomalySpec {
                            kind,
                            start_clip: start,
                            duration_clips: duration,
                            magnitude: k.magnitude,
                        }]
                    }
                    None => vec![],
                };
                (format!("test_{t:03}"), Split::Test, anomalies)
            };
            episodes.push(EpisodeRecord {
                id,
                split,
                episode_seed: derive_seed(self.master_seed, "episode", i as u64),
                clips_per_phase,
                trailing_frames,
                anomalies,
            });
        }
        Ok(episodes)
    }
}

/// Generates every episode, writes them in the dataset formats together with
/// `manifest.json` and `spec.json`, and returns the manifest.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let episodes = spec.plan()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let width = spec.scenario.feature_width;
    let mut videos = Vec::with_capacity(episodes.len());
    for record in &episodes {
        let bundle = generate_episode(&record.scenario(spec), &record.anomalies, &record.id)?;
        let mut entry = bundle.entry;
        entry.split = record.split;
        let dir = out_dir.join(&record.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let target = |p: &Option<std::path::PathBuf>| out_dir.join(p.as_ref().expect("synthetic entries are complete"));
        write_features(&out_dir.join(&entry.features_path), &bundle.features, width)?;
        write_sensor(&target(&entry.sensor_path), &bundle.sensor)?;
        write_scene_graph(&target(&entry.scenegraph_path), &bundle.scene_graph)?;
        write_labels(&target(&entry.labels_path), &bundle.labels)?;
        videos.push(entry);
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        feature_width: width,
        sensor_channels: spec.scenario.sensor_channel_names(),
        vocab: SceneGraphVocab {
            objects: spec.scenario.objects.clone(),
            relations: spec.scenario.relations.clone(),
        },
        modality_config: ModalityConfig::ALL,
        videos,
        root: out_dir.to_path_buf(),
        skipped: Vec::new(),
    };
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &manifest)?;
    write_json_atomic(
        &out_dir.join(SPEC_FILE),
        &SpecFile {
            spec,
            episodes: &episodes,
        },
    )?;
    log::info!(
        "wrote {} episodes ({} anomalous) to {}",
        episodes.len(),
        spec.anomaly_mix.total(),
        out_dir.display()
    );
    Ok(manifest)
}
