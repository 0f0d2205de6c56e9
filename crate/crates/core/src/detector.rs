//! End-to-end detector: standardizer, trained autoencoder and the fusion
//! settings needed to score new videos the same way.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AEConfig, Autoencoder, Preset, TrainConfig, TrainedModel, DEFAULT_DROPOUT};
use crate::dataio::ModalityConfig;
use crate::error::{Error, Result};
use crate::fusion::{FusedDataset, FusedVideo, FusionOptions, Standardizer, DEFAULT_STD_FLOOR};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::scoring::ScoreSeries;

/// Everything that shapes a training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    /// `None` picks vision-only for vision-only inputs, multimodal otherwise.
    pub preset: Option<Preset>,
    /// Explicit encoder widths; overrides the preset.
    pub encoder_widths: Option<Vec<usize>>,
    pub dropout_p: f64,
    pub fusion: FusionOptions,
    pub train: TrainConfig,
    pub std_floor: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            preset: None,
            encoder_widths: None,
            dropout_p: DEFAULT_DROPOUT,
            fusion: FusionOptions::default(),
            train: TrainConfig::default(),
            std_floor: DEFAULT_STD_FLOOR,
        }
    }
}

impl DetectorSettings {
    pub fn architecture(&self, modality: &ModalityConfig, input_width: usize) -> Result<AEConfig> {
        if let Some(widths) = &self.encoder_widths {
            return AEConfig::custom(input_width, widths.clone(), self.dropout_p);
        }
        let preset = match self.preset {
            Some(Preset::Custom) => {
                return Err(Error::config("the custom preset needs explicit encoder widths"))
            }
            Some(Preset::Multimodal) if modality.is_vision_only() => {
                return Err(Error::config(
                    "the multimodal preset needs sensor or scene-graph input",
                ))
            }
            Some(p) => p,
            None if modality.is_vision_only() => Preset::VisionOnly,
            None => Preset::Multimodal,
        };
        let mut config = AEConfig::preset(preset, input_width)?;
        config.dropout_p = self.dropout_p;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectorMeta {
    model: AEConfig,
    train: TrainConfig,
    loss_history: Vec<f64>,
    standardizer: Option<Standardizer>,
    modality: ModalityConfig,
    fusion: FusionOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub model: TrainedModel,
    pub standardizer: Option<Standardizer>,
    pub modality: ModalityConfig,
    pub fusion: FusionOptions,
}

impl Detector {
    /// Fits the standardizer and trains on the Train split of `dataset`.
    pub fn fit(dataset: &FusedDataset, settings: &DetectorSettings) -> Result<Self> {
        let train = dataset.train_vectors();
        if train.len() < 2 {
            return Err(Error::validation(format!(
                "the Train split holds {} clips; at least 2 are needed",
                train.len()
            )));
        }
        let standardizer = if settings.fusion.standardize {
            Some(Standardizer::fit(&train, settings.std_floor)?)
        } else {
            None
        };
        let train = match &standardizer {
            Some(s) => train.iter().map(|v| s.apply(v)).collect::<Result<Vec<_>>>()?,
            None => train,
        };
        let config = settings.architecture(&dataset.config, dataset.width())?;
        let untrained = Autoencoder::build(config, settings.train.seed)?;
        let model = autoencoder::train(untrained, &train, &settings.train)?;
        log::info!(
            "trained {} on {} clips, final loss {:.5}",
            dataset.config,
            train.len(),
            model.loss_history.last().copied().unwrap_or(f64::NAN)
        );
        Ok(Detector {
            model,
            standardizer,
            modality: dataset.config,
            fusion: settings.fusion,
        })
    }

    pub fn input_width(&self) -> usize {
        self.model.input_width()
    }

    /// Per-clip reconstruction errors of raw fused vectors.
    pub fn raw_errors(&self, vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
        match &self.standardizer {
            Some(s) => {
                let z = vectors.iter().map(|v| s.apply(v)).collect::<Result<Vec<_>>>()?;
                self.model.reconstruction_errors(&z)
            }
            None => self.model.reconstruction_errors(vectors),
        }
    }

    pub fn score(&self, video: &FusedVideo) -> Result<ScoreSeries> {
        ScoreSeries::new(video.video_id.clone(), self.raw_errors(&video.vectors)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = DetectorMeta {
            model: self.model.config.clone(),
            train: self.model.train_config.clone(),
            loss_history: self.model.loss_history.clone(),
            standardizer: self.standardizer.clone(),
            modality: self.modality,
            fusion: self.fusion,
        };
        let ck = Checkpoint::new(self.model.network.clone(), self.model.train_config.seed, meta);
        save_checkpoint(path, &ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint<DetectorMeta> = load_checkpoint(path)?;
        let meta = ck.extra;
        meta.model.validate()?;
        if ck.network.inputs() != meta.model.input_width || ck.network.outputs() != meta.model.input_width {
            return Err(Error::validation(format!(
                "{}: network width does not match its recorded configuration",
                path.display()
            )));
        }
        if let Some(s) = &meta.standardizer {
            if s.width() != meta.model.input_width {
                return Err(Error::validation(format!(
                    "{}: standardizer width {} does not match the model",
                    path.display(),
                    s.width()
                )));
            }
        }
        Ok(Detector {
            model: TrainedModel {
                network: ck.network,
                config: meta.model,
                train_config: meta.train,
                loss_history: meta.loss_history,
            },
            standardizer: meta.standardizer,
            modality: meta.modality,
            fusion: meta.fusion,
        })
    }
}
