//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data validation error,
//! 4 runtime or IO error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autoencoder::{Preset, TrainConfig};
use crate::dataio::{load_manifest, DatasetManifest, LoadOptions, ModalityConfig, Split};
use crate::detector::{Detector, DetectorSettings};
use crate::error::{Error, ErrorClass, Result};
use crate::eval::{dataset_hash, emit_report, evaluate_detector, run_ablation, AblationReport};
use crate::fusion::{build_fused_dataset, FusionOptions, PoolPolicy, DEFAULT_STD_FLOOR};
use crate::scoring::{
    apply_threshold, normalize_errors, percentile_threshold, score_rows, select_threshold,
    write_scores_csv, DecisionRule, ScoreSeries,
};
use crate::synth::{generate_dataset, AnomalyMix, DatasetSpec, ScenarioConfig, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "hri-anomaly",
    version,
    about = "Multimodal anomaly detection for human-robot interaction recordings",
    args_override_self = true
)]
pub struct Cli {
    /// JSON file whose keys supply subcommand flags (e.g. {"epochs": 20});
    /// flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a detector on the Train split of a manifest.
    Train(TrainArgs),
    /// Score videos with a trained detector and write a per-clip CSV.
    Score(ScoreArgs),
    /// Evaluate a trained detector on the Test split (ROC/AUC report).
    Eval(EvalArgs),
    /// Train and evaluate several modality configurations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Normal episodes in the Train split.
    #[arg(long, default_value_t = 55)]
    pub n_train: usize,
    /// Normal episodes in the Test split.
    #[arg(long, default_value_t = 0)]
    pub n_test_normal: usize,
    /// Anomalous Test episodes per kind.
    #[arg(long, default_value_t = 7)]
    pub drop_cup: usize,
    #[arg(long, default_value_t = 5)]
    pub torque_limit: usize,
    #[arg(long, default_value_t = 3)]
    pub extra_person: usize,
    #[arg(long, default_value_t = 2)]
    pub collision: usize,
    #[arg(long, default_value_t = 768)]
    pub feature_width: usize,
    #[arg(long, default_value_t = 100.0)]
    pub sensor_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    pub feature_noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub sensor_noise: f64,
    #[arg(long, default_value_t = 0.02)]
    pub sg_noise: f64,
    /// Maximum per-phase clip-count change between episodes.
    #[arg(long, default_value_t = 1)]
    pub phase_jitter: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Skip videos missing an enabled modality instead of failing.
    #[arg(long)]
    pub skip_incomplete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    VisionOnly,
    Multimodal,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Architecture preset; defaults to vision-only for vision-only inputs
    /// and multimodal otherwise.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Explicit encoder widths, e.g. 128,32 (overrides --preset).
    #[arg(long, value_delimiter = ',')]
    pub encoder_widths: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep clip order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Train on raw fused vectors instead of z-scored ones.
    #[arg(long)]
    pub no_standardize: bool,
    /// Policy for clip windows without sensor samples.
    #[arg(long, default_value = "error", value_parser = parse_pool_policy)]
    pub pool_policy: PoolPolicy,
    /// Max-pool sensor magnitudes rather than signed values.
    #[arg(long)]
    pub pool_abs: bool,
    /// Flag clips strictly above the threshold instead of at or above it.
    #[arg(long)]
    pub strict_gt: bool,
}

impl ModelArgs {
    pub fn settings(&self) -> DetectorSettings {
        DetectorSettings {
            preset: self.preset.map(|p| match p {
                PresetArg::VisionOnly => Preset::VisionOnly,
                PresetArg::Multimodal => Preset::Multimodal,
            }),
            encoder_widths: self.encoder_widths.clone(),
            dropout_p: self.dropout,
            fusion: FusionOptions {
                pool_policy: self.pool_policy,
                pool_abs: self.pool_abs,
                standardize: !self.no_standardize,
            },
            train: TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.lr,
                seed: self.seed,
                shuffle: !self.no_shuffle,
            },
            std_floor: DEFAULT_STD_FLOOR,
        }
    }

    pub fn rule(&self) -> DecisionRule {
        rule(self.strict_gt)
    }
}

fn rule(strict_gt: bool) -> DecisionRule {
    if strict_gt {
        DecisionRule::StrictlyAbove
    } else {
        DecisionRule::AtLeast
    }
}

fn parse_modality(s: &str) -> std::result::Result<ModalityConfig, String> {
    s.parse::<ModalityConfig>().map_err(|e| e.to_string())
}

fn parse_pool_policy(s: &str) -> std::result::Result<PoolPolicy, String> {
    s.parse::<PoolPolicy>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Modalities to fuse (vision, vision+sensor, vision+sg, all); defaults
    /// to everything the manifest provides.
    #[arg(long, value_parser = parse_modality)]
    pub modalities: Option<ModalityConfig>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdMode {
    /// Per-video F1-optimal threshold from the clip labels.
    Oracle,
    /// q-th percentile of normalized errors on the Train split.
    Percentile,
    /// A fixed threshold given by --threshold.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Score CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Score only these video ids (repeatable); overrides --split.
    #[arg(long = "video")]
    pub videos: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "oracle")]
    pub threshold_mode: ThresholdMode,
    /// Percentile for --threshold-mode percentile, in (0, 100].
    #[arg(long, default_value_t = 99.0)]
    pub q: f64,
    /// Threshold for --threshold-mode fixed, in [0, 1].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Flag clips strictly above the threshold instead of at or above it
    #[arg(long)]
    pub strict_gt: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Flag clips strictly above the threshold instead of at or above it
    #[arg(long)]
    pub strict_gt: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated configurations.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_modality,
        default_value = "vision,vision+sensor,vision+sg,all"
    )]
    pub configs: Vec<ModalityConfig>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Turns a flat JSON object into `--key value` tokens. `true` becomes a bare
/// flag, `false` and `null` are dropped, arrays are comma-joined.
pub fn config_tokens(value: &serde_json::Value) -> Result<Vec<String>> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("config file must hold a JSON object"))?;
    let scalar = |v: &serde_json::Value| -> Result<String> {
        match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(Error::config(format!("unsupported config value {other}"))),
        }
    };
    let mut tokens = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => tokens.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                tokens.push(flag);
                tokens.push(parts.join(","));
            }
            other => {
                tokens.push(flag);
                tokens.push(scalar(other)?);
            }
        }
    }
    Ok(tokens)
}

const SUBCOMMANDS: [&str; 5] = ["synth", "train", "score", "eval", "ablate"];

/// Splices tokens from `--config FILE` in right after the subcommand name, so
/// explicit arguments that follow override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<Option<&str>> = args.iter().map(|a| a.to_str()).collect();
    let mut config: Option<PathBuf> = None;
    for (i, a) in strs.iter().enumerate() {
        match a {
            Some("--config") => {
                config = args.get(i + 1).map(PathBuf::from);
            }
            Some(s) if s.starts_with("--config=") => {
                config = Some(PathBuf::from(&s["--config=".len()..]));
            }
            _ => {}
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let Some(sub) = strs
        .iter()
        .position(|a| a.is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(args);
    };
    let value: serde_json::Value = crate::util::read_json(&path)?;
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(config_tokens(&value)?.into_iter().map(OsString::from));
    out.extend(args[sub + 1..].iter().cloned());
    Ok(out)
}

fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Runtime => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

fn load(data: &DataArgs) -> Result<DatasetManifest> {
    load_manifest(
        &data.manifest,
        LoadOptions {
            skip_incomplete: data.skip_incomplete,
        },
    )
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = DatasetSpec {
        n_normal_train: a.n_train,
        n_normal_test: a.n_test_normal,
        anomaly_mix: AnomalyMix {
            drop_cup: a.drop_cup,
            torque_limit: a.torque_limit,
            extra_person: a.extra_person,
            collision: a.collision,
        },
        scenario: ScenarioConfig {
            feature_width: a.feature_width,
            sensor_rate: a.sensor_rate,
            feature_noise: a.feature_noise,
            sensor_noise: a.sensor_noise,
            scene_graph_noise: a.sg_noise,
            ..ScenarioConfig::default()
        },
        phase_jitter: a.phase_jitter,
        master_seed: a.seed,
        ..DatasetSpec::default()
    };
    let manifest = generate_dataset(&spec, &a.out)?;
    println!(
        "wrote {} videos to {} (dataset hash {})",
        manifest.videos.len(),
        a.out.join(MANIFEST_FILE).display(),
        dataset_hash(&manifest)?
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = load(&a.data)?;
    let config = a.modalities.unwrap_or(manifest.modality_config);
    let settings = a.model.settings();
    let dataset = build_fused_dataset(&manifest, &config, &settings.fusion)?;
    let detector = Detector::fit(&dataset, &settings)?;
    detector.save(&a.out)?;
    println!(
        "trained {} ({} epochs), final loss {:.6}; checkpoint {}",
        config,
        detector.model.loss_history.len(),
        detector.model.loss_history.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn checkpoint_dataset(
    manifest: &DatasetManifest,
    detector: &Detector,
) -> Result<crate::fusion::FusedDataset> {
    let dataset = build_fused_dataset(manifest, &detector.modality, &detector.fusion)?;
    if dataset.width() != detector.input_width() {
        return Err(Error::validation(format!(
            "checkpoint expects fused vectors of width {} but the manifest yields {} under {}",
            detector.input_width(),
            dataset.width(),
            detector.modality
        )));
    }
    Ok(dataset)
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let manifest = load(&a.data)?;
    let detector = Detector::load(&a.checkpoint)?;
    let dataset = checkpoint_dataset(&manifest, &detector)?;
    let rule = rule(a.strict_gt);

    let global = match a.threshold_mode {
        ThresholdMode::Oracle => None,
        ThresholdMode::Percentile => {
            let mut pooled = Vec::new();
            for v in dataset.split(Split::Train) {
                pooled.extend(normalize_errors(&detector.raw_errors(&v.vectors)?)?);
            }
            let t = percentile_threshold(&pooled, a.q)?;
            log::info!("percentile {} of Train normalized errors: {t}", a.q);
            Some(t)
        }
        ThresholdMode::Fixed => {
            let t = a
                .threshold
                .ok_or_else(|| Error::config("--threshold-mode fixed needs --threshold"))?;
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("--threshold must lie in [0, 1]"));
            }
            Some(t)
        }
    };

    for id in &a.videos {
        manifest.video(id)?;
    }
    let selected = dataset.videos.iter().filter(|v| {
        if !a.videos.is_empty() {
            a.videos.contains(&v.video_id)
        } else {
            match a.split {
                SplitArg::Train => v.split == Split::Train,
                SplitArg::Test => v.split == Split::Test,
                SplitArg::All => true,
            }
        }
    });
    let mut rows = Vec::new();
    let mut flagged = 0;
    for video in selected {
        let series: ScoreSeries = detector.score(video)?;
        let has_labels = manifest.video(&video.video_id)?.labels_path.is_some();
        let predictions = match global {
            Some(t) => apply_threshold(&series.normalized, t, rule),
            None => {
                if !has_labels {
                    return Err(Error::validation(format!(
                        "video {:?} has no labels; oracle thresholds need them",
                        video.video_id
                    )));
                }
                select_threshold(&series.normalized, &video.labels, rule)?.predictions
            }
        };
        flagged += predictions.iter().filter(|&&p| p == 1).count();
        let labels = has_labels.then_some(video.labels.as_slice());
        rows.extend(score_rows(&series, &predictions, labels));
    }
    write_scores_csv(&a.out, &rows)?;
    println!(
        "scored {} clips, {} flagged; wrote {}",
        rows.len(),
        flagged,
        a.out.display()
    );
    Ok(())
}

fn print_report(report: &AblationReport, out: &Path) {
    println!("{:<16} {:>8} {:>8} {:>8}", "config", "auc", "best_f1", "clips");
    for e in &report.entries {
        println!("{:<16} {:>8.4} {:>8.4} {:>8}", e.name, e.auc, e.best_f1, e.n_clips);
    }
    println!("report written to {}", out.display());
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let manifest = load(&a.data)?;
    let detector = Detector::load(&a.checkpoint)?;
    let dataset = checkpoint_dataset(&manifest, &detector)?;
    let rule = rule(a.strict_gt);
    let entry = evaluate_detector(&detector, &dataset, rule)?;
    let model = &detector.model.config;
    let settings = DetectorSettings {
        preset: (model.preset != Preset::Custom).then_some(model.preset),
        encoder_widths: (model.preset == Preset::Custom).then(|| model.encoder_widths.clone()),
        dropout_p: model.dropout_p,
        fusion: detector.fusion,
        train: detector.model.train_config.clone(),
        std_floor: detector
            .standardizer
            .as_ref()
            .map_or(DEFAULT_STD_FLOOR, |s| s.floor),
    };
    let report = AblationReport {
        dataset_hash: dataset_hash(&manifest)?,
        seed: settings.train.seed,
        settings,
        rule,
        entries: vec![entry],
    };
    emit_report(&report, &a.out)?;
    print_report(&report, &a.out);
    Ok(())
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let manifest = load(&a.data)?;
    let report = run_ablation(&manifest, &a.configs, &a.model.settings(), a.model.rule())?;
    emit_report(&report, &a.out)?;
    print_report(&report, &a.out);
    Ok(())
}
