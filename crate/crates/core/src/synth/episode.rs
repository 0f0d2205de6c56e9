use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AnomalyKind, AnomalySpec, Phase, ScenarioConfig};
use crate::dataio::{ClipFeatureSet, ClipLabels, SceneGraphMatrix, SensorLog, Split, VideoEntry};
use crate::error::{Error, Result};
use crate::fusion::{clip_windows, ClipWindow};
use crate::util::derive_seed;

/// Joints disturbed by a torque-limit anomaly.
const TORQUE_LIMIT_JOINTS: usize = 3;
/// Torque added at a collision, per unit of magnitude.
const COLLISION_SPIKE: f64 = 40.0;
const COLLISION_SPIKE_SECONDS: f64 = 0.05;
const TORQUE_AMPLITUDE: f64 = 1.0;
const TORQUE_BASE_RANGE: f64 = 8.0;
const EPISODE_TORQUE_OFFSET: f64 = 0.3;

/// Rounds to four decimals, so values print short and reload exactly.
fn quantize(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// All files of one generated video, mutually consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBundle {
    pub entry: VideoEntry,
    pub features: ClipFeatureSet,
    pub sensor: SensorLog,
    pub scene_graph: SceneGraphMatrix,
    pub labels: ClipLabels,
    pub anomalies: Vec<AnomalySpec>,
}

fn unit_vector(width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..width).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Class geometry shared by every episode with the same scenario seed.
struct Geometry {
    prototypes: Vec<Vec<f64>>,
    torque_base: Vec<Vec<f64>>,
    torque_freq: Vec<f64>,
}

fn geometry(s: &ScenarioConfig) -> Geometry {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, "geometry", 0));
    let prototypes = Phase::ALL
        .iter()
        .map(|_| {
            unit_vector(s.feature_width, &mut rng)
                .into_iter()
                .map(|x| x * s.prototype_norm)
                .collect()
        })
        .collect();
    let torque_base = Phase::ALL
        .iter()
        .map(|_| {
            (0..s.torque_channels)
                .map(|_| rng.random_range(-TORQUE_BASE_RANGE..TORQUE_BASE_RANGE))
                .collect()
        })
        .collect();
    let torque_freq = (0..s.torque_channels)
        .map(|_| rng.random_range(0.2..0.6))
        .collect();
    Geometry {
        prototypes,
        torque_base,
        torque_freq,
    }
}

/// Feature prototype of each phase, indexed by [`Phase::index`].
pub fn phase_prototypes(s: &ScenarioConfig) -> Vec<Vec<f64>> {
    geometry(s).prototypes
}

/// (object, relation, score) triples describing a phase.
fn phase_pattern(phase: Phase) -> &'static [(&'static str, &'static str, f64)] {
    match phase {
        Phase::Idle => &[
            ("cup", "on", 1.0),
            ("person", "in_front_of", 1.0),
            ("robot", "near", 0.3),
        ],
        Phase::MoveNoCup => &[
            ("cup", "on", 1.0),
            ("person", "in_front_of", 1.0),
            ("robot", "near", 0.6),
            ("gripper", "near", 0.5),
        ],
        Phase::HumanHandover => &[
            ("person", "holds", 1.0),
            ("person", "looking_at", 1.0),
            ("cup", "touching", 1.0),
            ("robot", "near", 1.0),
            ("gripper", "touching", 1.0),
        ],
        Phase::MoveWithCup => &[
            ("robot", "holds", 1.0),
            ("gripper", "holds", 1.0),
            ("cup", "touching", 1.0),
            ("person", "in_front_of", 1.0),
        ],
        Phase::Place => &[
            ("robot", "holds", 0.5),
            ("cup", "on", 1.0),
            ("gripper", "touching", 1.0),
            ("table", "touching", 0.5),
        ],
        Phase::RobotPicking => &[
            ("robot", "near", 1.0),
            ("gripper", "touching", 1.0),
            ("cup", "on", 0.5),
            ("table", "near", 1.0),
        ],
        Phase::RobotHandover => &[
            ("robot", "holds", 1.0),
            ("person", "holds", 0.5),
            ("person", "near", 1.0),
            ("person", "looking_at", 1.0),
            ("cup", "touching", 1.0),
        ],
    }
}

const PATTERN_OBJECTS: [&str; 5] = ["person", "robot", "cup", "gripper", "table"];

fn position(names: &[String], name: &str) -> Option<usize> {
    names.iter().position(|n| n == name)
}

fn clip_of(windows: &[ClipWindow], t: f64) -> Option<usize> {
    let i = windows.partition_point(|w| w.time_end <= t);
    (i < windows.len()).then_some(i)
}

/// Generates one episode. Deterministic in (`scenario`, `anomalies`).
pub fn generate_episode(
    scenario: &ScenarioConfig,
    anomalies: &[AnomalySpec],
    video_id: &str,
) -> Result<EpisodeBundle> {
    scenario.validate()?;
    let clip_count = scenario.clip_count();
    for a in anomalies {
        a.validate(clip_count)?;
    }
    let geo = geometry(scenario);
    let phases = scenario.clip_phases();
    let windows = clip_windows(scenario.frame_count(), scenario.fps)?;
    let seed = scenario.episode_seed;
    let anomaly_rng = |k: usize| ChaCha8Rng::seed_from_u64(derive_seed(seed, "anomaly", k as u64));

    let mut labels = vec![0u8; clip_count];
    for a in anomalies {
        labels[a.clips()].iter_mut().for_each(|l| *l = 1);
    }

    // visual features
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "features", 0));
    let offset: Vec<f64> = unit_vector(scenario.feature_width, &mut rng)
        .into_iter()
        .map(|x| x * scenario.episode_offset_norm)
        .collect();
    let feature_noise = Normal::new(0.0, scenario.feature_noise)
        .map_err(|e| Error::config(format!("feature noise: {e}")))?;
    let mut centres: Vec<Vec<f64>> = phases
        .iter()
        .map(|p| geo.prototypes[p.index()].clone())
        .collect();
    for (k, a) in anomalies.iter().enumerate() {
        let weight = match a.kind {
            AnomalyKind::DropCup => a.magnitude.min(1.0),
            AnomalyKind::Collision => 0.5 * a.magnitude,
            _ => continue,
        };
        let dir = unit_vector(scenario.feature_width, &mut anomaly_rng(k));
        for c in a.clips() {
            for (x, d) in centres[c].iter_mut().zip(&dir) {
                let off = d * scenario.prototype_norm;
                *x = if a.kind == AnomalyKind::DropCup {
                    (1.0 - weight) * *x + weight * off
                } else {
                    *x + weight * off
                };
            }
        }
    }
    let vectors = centres
        .iter()
        .map(|centre| {
            centre
                .iter()
                .zip(&offset)
                .map(|(c, o)| quantize(c + o + feature_noise.sample(&mut rng)))
                .collect()
        })
        .collect();

    // sensor log
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sensor", 0));
    let joints = scenario.torque_channels;
    let phase_shift: Vec<f64> = (0..joints).map(|_| rng.random_range(0.0..TAU)).collect();
    let joint_offset: Vec<f64> = (0..joints)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * EPISODE_TORQUE_OFFSET)
        .collect();
    let duration = scenario.frame_count() as f64 / scenario.fps;
    let timestamps: Vec<f64> = (0..)
        .map(|k| k as f64 / scenario.sensor_rate)
        .take_while(|&t| t < duration)
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(timestamps.len());
    for &t in &timestamps {
        let phase = clip_of(&windows, t).map_or(*phases.last().expect("non-empty"), |c| phases[c]);
        let mut row: Vec<f64> = (0..joints)
            .map(|j| {
                geo.torque_base[phase.index()][j]
                    + joint_offset[j]
                    + TORQUE_AMPLITUDE * (TAU * geo.torque_freq[j] * t + phase_shift[j]).sin()
                    + scenario.sensor_noise * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let grip = if phase.robot_holds_cup() { 1.0 } else { 0.0 };
        row.push(grip + 0.1 * scenario.sensor_noise * rng.sample::<f64, _>(StandardNormal));
        rows.push(row);
    }
    for (k, a) in anomalies.iter().enumerate() {
        let mut arng = anomaly_rng(k);
        let span = windows[a.start_clip].time_start..windows[a.start_clip + a.duration_clips - 1].time_end;
        match a.kind {
            AnomalyKind::TorqueLimit => {
                let mut order: Vec<usize> = (0..joints).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut arng);
                order.truncate(TORQUE_LIMIT_JOINTS.min(joints));
                for (t, row) in timestamps.iter().zip(rows.iter_mut()) {
                    if span.contains(t) {
                        for &j in &order {
                            row[j] += a.magnitude;
                        }
                    }
                }
            }
            AnomalyKind::Collision => {
                // one short spike inside every affected clip
                for c in a.clips() {
                    let w = &windows[c];
                    let start = arng.random_range(w.time_start..w.time_end - COLLISION_SPIKE_SECONDS);
                    for (t, row) in timestamps.iter().zip(rows.iter_mut()) {
                        if (start..start + COLLISION_SPIKE_SECONDS).contains(t) {
                            for v in &mut row[..joints] {
                                *v += COLLISION_SPIKE * a.magnitude;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for row in &mut rows {
        row.iter_mut().for_each(|v| *v = quantize(*v));
    }

    // scene graph
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "scene_graph", 0));
    let (n_obj, n_rel) = (scenario.objects.len(), scenario.relations.len());
    let extra_row = n_obj - 1;
    let mut clutter = vec![vec![0.0; n_rel]; n_obj];
    for (o, row) in clutter.iter_mut().enumerate() {
        if o == extra_row || PATTERN_OBJECTS.contains(&scenario.objects[o].as_str()) {
            continue;
        }
        for v in row.iter_mut() {
            if rng.random::<f64>() < 0.3 {
                *v = rng.random_range(0.2..1.0);
            }
        }
    }
    let mut truth: Vec<Vec<Vec<f64>>> = phases
        .iter()
        .map(|&p| {
            let mut m = clutter.clone();
            for &(obj, rel, v) in phase_pattern(p) {
                if let (Some(o), Some(r)) = (
                    position(&scenario.objects, obj),
                    position(&scenario.relations, rel),
                ) {
                    if o != extra_row {
                        m[o][r] = v;
                    }
                }
            }
            m
        })
        .collect();
    for a in anomalies {
        match a.kind {
            AnomalyKind::DropCup => {
                if let Some(r) = position(&scenario.relations, "holds") {
                    for c in a.clips() {
                        truth[c].iter_mut().for_each(|row| row[r] = 0.0);
                    }
                }
            }
            AnomalyKind::ExtraPerson => {
                let cols: Vec<usize> = ["near", "looking_at", "in_front_of"]
                    .iter()
                    .filter_map(|r| position(&scenario.relations, r))
                    .collect();
                let cols = if cols.is_empty() { vec![0] } else { cols };
                for c in a.clips() {
                    for &r in &cols {
                        truth[c][extra_row][r] = a.magnitude.min(1.0);
                    }
                }
            }
            _ => {}
        }
    }
    let sg_clips = truth
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|v| {
                            let noise = scenario.scene_graph_noise * rng.sample::<f64, _>(StandardNormal);
                            quantize((v + noise).clamp(0.0, 1.0))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let dir = PathBuf::from(video_id);
    Ok(EpisodeBundle {
        entry: VideoEntry {
            id: video_id.to_string(),
            split: if anomalies.is_empty() { Split::Train } else { Split::Test },
            features_path: dir.join("features.csv"),
            sensor_path: Some(dir.join("sensor.csv")),
            scenegraph_path: Some(dir.join("scene_graph.json")),
            labels_path: Some(dir.join("labels.csv")),
            frame_count: scenario.frame_count(),
            fps: scenario.fps,
        },
        features: ClipFeatureSet {
            video_id: video_id.to_string(),
            vectors,
        },
        sensor: SensorLog {
            video_id: video_id.to_string(),
            channel_names: scenario.sensor_channel_names(),
            timestamps,
            rows,
        },
        scene_graph: SceneGraphMatrix {
            video_id: video_id.to_string(),
            clips: sg_clips,
        },
        labels: ClipLabels {
            video_id: video_id.to_string(),
            labels,
        },
        anomalies: anomalies.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::pool_clips;
    use crate::fusion::PoolPolicy;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            feature_width: 32,
            seed: 5,
            episode_seed: 11,
            trailing_frames: 7,
            ..ScenarioConfig::default()
        }
    }

    fn spec(kind: AnomalyKind, start: usize, duration: usize, magnitude: f64) -> AnomalySpec {
        AnomalySpec {
            kind,
            start_clip: start,
            duration_clips: duration,
            magnitude,
        }
    }

    #[test]
    fn deterministic_and_consistent() {
        let s = small();
        let a = generate_episode(&s, &[], "e0").unwrap();
        let b = generate_episode(&s, &[], "e0").unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.labels.labels, vec![0; 22]);
        assert_eq!(a.features.clip_count(), 22);
        assert_eq!(a.scene_graph.clips.len(), 22);
        assert_eq!(a.entry.clip_count(), 22);
        a.sensor.validate().unwrap();
        a.scene_graph.validate(8, 6).unwrap();
        let other = ScenarioConfig {
            episode_seed: 12,
            ..small()
        };
        assert_ne!(generate_episode(&other, &[], "e0").unwrap().features, a.features);
    }

    #[test]
    fn labels_cover_exactly_the_injected_clips() {
        let e = generate_episode(&small(), &[spec(AnomalyKind::TorqueLimit, 11, 2, 25.0)], "e").unwrap();
        let ones: Vec<usize> = (0..22).filter(|&i| e.labels.labels[i] == 1).collect();
        assert_eq!(ones, vec![11, 12]);
        assert!(generate_episode(&small(), &[spec(AnomalyKind::DropCup, 21, 2, 0.5)], "e").is_err());
    }

    #[test]
    fn nearest_prototype_recovers_phases() {
        let s = small();
        let e = generate_episode(&s, &[], "e").unwrap();
        let protos = phase_prototypes(&s);
        for (v, phase) in e.features.vectors.iter().zip(s.clip_phases()) {
            let dist = |p: &Vec<f64>| v.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let nearest = (0..protos.len())
                .min_by(|&i, &j| dist(&protos[i]).total_cmp(&dist(&protos[j])))
                .unwrap();
            assert_eq!(nearest, phase.index());
        }
    }

    #[test]
    fn extra_person_touches_only_the_scene_graph() {
        let s = small();
        let twin = generate_episode(&s, &[], "e").unwrap();
        let e = generate_episode(&s, &[spec(AnomalyKind::ExtraPerson, 5, 2, 1.0)], "e").unwrap();
        assert_eq!(e.features, twin.features);
        assert_eq!(e.sensor, twin.sensor);
        for c in 0..22 {
            let changed = e.scene_graph.clips[c] != twin.scene_graph.clips[c];
            assert_eq!(changed, (5..7).contains(&c), "clip {c}");
            if changed {
                assert!(e.scene_graph.clips[c][7].iter().any(|&v| v > 0.9));
                assert_eq!(e.scene_graph.clips[c][..7], twin.scene_graph.clips[c][..7]);
            }
        }
    }

    #[test]
    fn torque_limit_raises_pooled_maxima() {
        let s = small();
        let magnitude = 25.0;
        let twin = generate_episode(&s, &[], "e").unwrap();
        let e = generate_episode(&s, &[spec(AnomalyKind::TorqueLimit, 8, 3, magnitude)], "e").unwrap();
        assert_eq!(e.features, twin.features);
        assert_eq!(e.scene_graph, twin.scene_graph);
        let windows = clip_windows(s.frame_count(), s.fps).unwrap();
        let pa = pool_clips(&e.sensor, &windows, PoolPolicy::Error, false).unwrap();
        let pn = pool_clips(&twin.sensor, &windows, PoolPolicy::Error, false).unwrap();
        for c in 0..22 {
            let raised = (0..7).filter(|&j| pa[c][j] >= pn[c][j] + magnitude - 1e-3).count();
            if (8..11).contains(&c) {
                assert_eq!(raised, TORQUE_LIMIT_JOINTS, "clip {c}");
            } else {
                assert_eq!(pa[c], pn[c], "clip {c}");
            }
        }
    }

    #[test]
    fn drop_cup_and_collision_change_features() {
        let s = small();
        let twin = generate_episode(&s, &[], "e").unwrap();
        let d = generate_episode(&s, &[spec(AnomalyKind::DropCup, 5, 3, 0.6)], "e").unwrap();
        let holds = 0;
        for c in 5..8 {
            assert_ne!(d.features.vectors[c], twin.features.vectors[c]);
            assert!(d.scene_graph.clips[c].iter().all(|row| row[holds] < 0.2));
        }
        assert_eq!(d.features.vectors[4], twin.features.vectors[4]);
        assert_eq!(d.sensor, twin.sensor);

        let windows = clip_windows(s.frame_count(), s.fps).unwrap();
        let c = generate_episode(&s, &[spec(AnomalyKind::Collision, 14, 2, 1.0)], "e").unwrap();
        let pa = pool_clips(&c.sensor, &windows, PoolPolicy::Error, false).unwrap();
        let pn = pool_clips(&twin.sensor, &windows, PoolPolicy::Error, false).unwrap();
        for clip in 14..16 {
            assert!(pa[clip][0] > pn[clip][0] + 30.0);
            assert_ne!(c.features.vectors[clip], twin.features.vectors[clip]);
        }
    }
}
