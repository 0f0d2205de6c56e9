//! Seeded synthetic interaction episodes with injected anomalies.
//!
//! An episode walks through a sequence of task phases. Each phase has a fixed
//! feature prototype, a sensor waveform and a scene-graph pattern; anomalies
//! perturb a chosen clip range in one or more modalities. Every random draw
//! comes from a generator derived from the scenario seeds, with one stream
//! per modality so an anomaly touching one modality leaves the others
//! bit-identical to the anomaly-free twin.

mod dataset;
mod episode;

pub use dataset::{
    generate_dataset, AnomalyMix, AnomalySettings, DatasetSpec, EpisodeRecord, KindSettings,
    MANIFEST_FILE, SPEC_FILE,
};
pub use episode::{generate_episode, phase_prototypes, EpisodeBundle};

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dataio::{DEFAULT_FEATURE_WIDTH, DEFAULT_FPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    MoveNoCup,
    HumanHandover,
    MoveWithCup,
    Place,
    RobotPicking,
    RobotHandover,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Idle,
        Phase::MoveNoCup,
        Phase::HumanHandover,
        Phase::MoveWithCup,
        Phase::Place,
        Phase::RobotPicking,
        Phase::RobotHandover,
    ];

    pub fn index(self) -> usize {
        Phase::ALL.iter().position(|&p| p == self).expect("listed")
    }

    /// Whether the robot gripper is closed on the cup.
    pub fn robot_holds_cup(self) -> bool {
        matches!(self, Phase::MoveWithCup | Phase::RobotHandover)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::MoveNoCup => "move no cup",
            Phase::HumanHandover => "human handover",
            Phase::MoveWithCup => "move with cup",
            Phase::Place => "place",
            Phase::RobotPicking => "robot picking object",
            Phase::RobotHandover => "robot handover",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Off-manifold visual features and no holding relation.
    DropCup,
    /// Sustained torque elevation on a few joints, sensors only.
    TorqueLimit,
    /// An additional person appears in the scene graph only.
    ExtraPerson,
    /// Visual deviation together with a torque spike.
    Collision,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::DropCup => "drop-cup",
            AnomalyKind::TorqueLimit => "torque-limit",
            AnomalyKind::ExtraPerson => "extra-person",
            AnomalyKind::Collision => "collision",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start_clip: usize,
    pub duration_clips: usize,
    /// Kind-specific strength: mixture weight for drop-cup, added torque for
    /// torque-limit, activation for extra-person, deviation scale for
    /// collision.
    pub magnitude: f64,
}

impl AnomalySpec {
    pub fn clips(&self) -> std::ops::Range<usize> {
        self.start_clip..self.start_clip + self.duration_clips
    }

    pub fn validate(&self, clip_count: usize) -> Result<()> {
        if self.duration_clips == 0 {
            return Err(Error::config(format!("{} anomaly has zero duration", self.kind)));
        }
        if self.start_clip + self.duration_clips > clip_count {
            return Err(Error::config(format!(
                "{} anomaly spans clips {}..{} but the episode has {clip_count}",
                self.kind,
                self.start_clip,
                self.start_clip + self.duration_clips
            )));
        }
        if !(self.magnitude.is_finite() && self.magnitude > 0.0) {
            return Err(Error::config(format!(
                "{} anomaly magnitude must be positive",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Phase layout, dimensions, noise levels and seeds of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub phases: Vec<Phase>,
    pub clips_per_phase: Vec<usize>,
    /// Frames after the last full clip (always < 32).
    pub trailing_frames: usize,
    pub fps: f64,
    pub feature_width: usize,
    /// Joint torque channels; one gripper channel is appended.
    pub torque_channels: usize,
    pub sensor_rate: f64,
    pub objects: Vec<String>,
    pub relations: Vec<String>,
    pub prototype_norm: f64,
    pub episode_offset_norm: f64,
    pub feature_noise: f64,
    pub sensor_noise: f64,
    pub scene_graph_noise: f64,
    /// Seeds the shared class geometry (prototypes, waveforms).
    pub seed: u64,
    /// Seeds the episode-specific draws.
    pub episode_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        ScenarioConfig {
            phases: vec![
                Phase::Idle,
                Phase::HumanHandover,
                Phase::MoveWithCup,
                Phase::Place,
                Phase::MoveNoCup,
                Phase::RobotPicking,
                Phase::MoveWithCup,
                Phase::RobotHandover,
                Phase::Idle,
            ],
            clips_per_phase: vec![2, 3, 3, 2, 2, 2, 3, 3, 2],
            trailing_frames: 0,
            fps: DEFAULT_FPS,
            feature_width: DEFAULT_FEATURE_WIDTH,
            torque_channels: 7,
            sensor_rate: 100.0,
            objects: s(&["person", "robot", "cup", "box", "table", "gripper", "chair", "second_person"]),
            relations: s(&["holds", "near", "touching", "looking_at", "on", "in_front_of"]),
            prototype_norm: 10.0,
            episode_offset_norm: 1.0,
            feature_noise: 0.05,
            sensor_noise: 0.2,
            scene_graph_noise: 0.02,
            seed: 0,
            episode_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::config("a scenario needs at least one phase"));
        }
        if self.phases.len() != self.clips_per_phase.len() {
            return Err(Error::config(format!(
                "{} phases but {} clip counts",
                self.phases.len(),
                self.clips_per_phase.len()
            )));
        }
        if self.clips_per_phase.contains(&0) {
            return Err(Error::config("every phase needs at least one clip"));
        }
        if self.trailing_frames >= crate::dataio::CLIP_FRAMES {
            return Err(Error::config("trailing frames must be fewer than one clip"));
        }
        if !(self.fps > 0.0 && self.sensor_rate > 0.0) {
            return Err(Error::config("frame rate and sensor rate must be positive"));
        }
        if self.feature_width == 0 || self.objects.is_empty() || self.relations.is_empty() {
            return Err(Error::config("feature width and vocabulary must be non-empty"));
        }
        for (name, v) in [
            ("prototype_norm", self.prototype_norm),
            ("episode_offset_norm", self.episode_offset_norm),
            ("feature_noise", self.feature_noise),
            ("sensor_noise", self.sensor_noise),
            ("scene_graph_noise", self.scene_graph_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn clip_count(&self) -> usize {
        self.clips_per_phase.iter().sum()
    }

    pub fn frame_count(&self) -> usize {
        self.clip_count() * crate::dataio::CLIP_FRAMES + self.trailing_frames
    }

    /// Phase of every clip, in order.
    pub fn clip_phases(&self) -> Vec<Phase> {
        self.phases
            .iter()
            .zip(&self.clips_per_phase)
            .flat_map(|(&p, &n)| std::iter::repeat_n(p, n))
            .collect()
    }

    pub fn sensor_channel_names(&self) -> Vec<String> {
        (1..=self.torque_channels)
            .map(|j| format!("joint_{j}_torque"))
            .chain(std::iter::once("gripper".to_string()))
            .collect()
    }
}

/// Plain-text summary of an episode specification.
pub fn describe(scenario: &ScenarioConfig, anomalies: &[AnomalySpec]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} clips ({} frames at {} fps), {} phases",
        scenario.clip_count(),
        scenario.frame_count(),
        scenario.fps,
        scenario.phases.len()
    );
    let mut clip = 0;
    for (p, n) in scenario.phases.iter().zip(&scenario.clips_per_phase) {
        let _ = writeln!(out, "  clips {}-{}: {p}", clip, clip + n - 1);
        clip += n;
    }
    let _ = writeln!(
        out,
        "dims: {} visual, {} sensor channels at {} Hz, scene graph {}x{}",
        scenario.feature_width,
        scenario.torque_channels + 1,
        scenario.sensor_rate,
        scenario.objects.len(),
        scenario.relations.len()
    );
    let _ = writeln!(out, "{} anomalies", anomalies.len());
    for a in anomalies {
        let _ = writeln!(
            out,
            "  {} at clips {}-{} (magnitude {})",
            a.kind,
            a.start_clip,
            a.start_clip + a.duration_clips - 1,
            a.magnitude
        );
    }
    out
}
