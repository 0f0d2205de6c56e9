//! Reconstruction autoencoder over fused clip vectors.
//!
//! Encoder and decoder are chains of linear blocks (Linear, BatchNorm, ReLU,
//! Dropout); the decoder mirrors the encoder and ends in a bare Linear layer
//! so reconstructions of standardized (signed, unbounded) inputs are not
//! clipped. Training minimizes L1 reconstruction loss with Adam.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::row_l1;
use crate::nn::{l1_loss, l1_loss_grad, AdamState, LinearBlock, LinearLayer, Matrix, Mode, Network, Stage};
use crate::util::derive_seed;

pub const VISION_ONLY_WIDTHS: [usize; 2] = [384, 96];
pub const MULTIMODAL_WIDTHS: [usize; 3] = [512, 256, 64];
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Shallow network for visual features alone.
    VisionOnly,
    /// Deeper network for fused multimodal vectors.
    Multimodal,
    Custom,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::VisionOnly => "vision-only",
            Preset::Multimodal => "multimodal",
            Preset::Custom => "custom",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vision-only" | "vision" => Ok(Preset::VisionOnly),
            "multimodal" => Ok(Preset::Multimodal),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEConfig {
    pub input_width: usize,
    /// Hidden widths from the input side down to the latent layer.
    pub encoder_widths: Vec<usize>,
    pub dropout_p: f64,
    pub preset: Preset,
}

impl AEConfig {
    pub fn preset(preset: Preset, input_width: usize) -> Result<Self> {
        let encoder_widths = match preset {
            Preset::VisionOnly => VISION_ONLY_WIDTHS.to_vec(),
            Preset::Multimodal => MULTIMODAL_WIDTHS.to_vec(),
            Preset::Custom => {
                return Err(Error::config(
                    "the custom preset needs explicit encoder widths",
                ))
            }
        };
        let config = AEConfig {
            input_width,
            encoder_widths,
            dropout_p: DEFAULT_DROPOUT,
            preset,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn custom(input_width: usize, encoder_widths: Vec<usize>, dropout_p: f64) -> Result<Self> {
        let config = AEConfig {
            input_width,
            encoder_widths,
            dropout_p,
            preset: Preset::Custom,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() {
            return Err(Error::config("at least one encoder width is required"));
        }
        let chain: Vec<usize> = std::iter::once(self.input_width)
            .chain(self.encoder_widths.iter().copied())
            .collect();
        if let Some(w) = chain.windows(2).find(|w| w[1] >= w[0]) {
            return Err(Error::config(format!(
                "encoder widths must strictly decrease from the input width {}: {} is followed by {}",
                self.input_width, w[0], w[1]
            )));
        }
        if self.encoder_widths.last() == Some(&0) {
            return Err(Error::config("latent width must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout probability must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Hidden widths of the decoder, i.e. the encoder chain reversed without
    /// the latent layer.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.encoder_widths[..self.encoder_widths.len() - 1].to_vec();
        w.reverse();
        w.push(self.input_width);
        w
    }

    pub fn linear_layer_count(&self) -> usize {
        2 * self.encoder_widths.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(
                "batch size must be at least 2 for batch normalization",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// An untrained encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub network: Network,
    pub config: AEConfig,
}

impl Autoencoder {
    pub fn build(config: AEConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", 0));
        let mut stages = Vec::with_capacity(config.linear_layer_count());
        let mut prev = config.input_width;
        for &w in &config.encoder_widths {
            stages.push(Stage::Block(LinearBlock::init(prev, w, config.dropout_p, &mut rng)?));
            prev = w;
        }
        let decoder = config.decoder_widths();
        let (last, hidden) = decoder.split_last().expect("decoder ends at the input width");
        for &w in hidden {
            stages.push(Stage::Block(LinearBlock::init(prev, w, config.dropout_p, &mut rng)?));
            prev = w;
        }
        stages.push(Stage::Linear(LinearLayer::init(prev, *last, &mut rng)));
        Ok(Autoencoder {
            network: Network::new(stages)?,
            config,
        })
    }
}

/// A trained autoencoder, frozen in inference mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub network: Network,
    pub config: AEConfig,
    pub train_config: TrainConfig,
    /// Mean training L1 loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Minimizes L1 reconstruction loss on `data` (normal clips only).
pub fn train(model: Autoencoder, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let Autoencoder {
        mut network,
        config,
    } = model;
    if data.len() < 2 {
        return Err(Error::validation(format!(
            "training needs at least 2 clips, got {}",
            data.len()
        )));
    }
    let x = Matrix::from_rows(data)?;
    if x.cols() != config.input_width {
        return Err(Error::shape(format!(
            "training vectors have width {}, model expects {}",
            x.cols(),
            config.input_width
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train", 0));
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                // a one-row batch has no batch variance
                continue;
            }
            let batch = x.select_rows(chunk);
            let (out, cache) = network.forward(&batch, Mode::Training, &mut rng)?;
            let loss = l1_loss(&out, &batch)?;
            let grad = l1_loss_grad(&out, &batch)?;
            let (grads, _) = network.backward(&cache, &grad)?;
            adam.step(&mut network.parameters_mut(), &grads.tensors())?;
            weighted += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let epoch_loss = weighted / seen as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(
                "training diverged: non-finite epoch loss".to_string(),
            ));
        }
        history.push(epoch_loss);
    }

    Ok(TrainedModel {
        network,
        config,
        train_config: cfg.clone(),
        loss_history: history,
    })
}

impl TrainedModel {
    pub fn input_width(&self) -> usize {
        self.config.input_width
    }

    fn check_width(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_width() {
            return Err(Error::shape(format!(
                "vector has width {}, model expects {}",
                v.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Inference-mode reconstruction of one vector.
    pub fn reconstruct(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_width(v)?;
        let x = Matrix::from_vec(1, v.len(), v.to_vec())?;
        Ok(self.network.predict(&x)?.into_vec())
    }

    /// Per-clip mean absolute reconstruction error.
    pub fn reconstruction_errors(&self, clips: &[Vec<f64>]) -> Result<Vec<f64>> {
        if clips.is_empty() {
            return Ok(Vec::new());
        }
        for c in clips {
            self.check_width(c)?;
        }
        let x = Matrix::from_rows(clips)?;
        let y = self.network.predict(&x)?;
        row_l1(&y, &x)
    }
}

/// Mean absolute difference between a vector and its reconstruction.
pub fn reconstruction_error(v: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if v.len() != reconstruction.len() {
        return Err(Error::shape("vector and reconstruction differ in width"));
    }
    if v.is_empty() {
        return Ok(0.0);
    }
    Ok(v.iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn widths(net: &Network) -> Vec<usize> {
        std::iter::once(net.inputs())
            .chain(net.stages().iter().map(|s| s.outputs()))
            .collect()
    }

    #[test]
    fn presets_build_mirrored_chains() {
        let v = Autoencoder::build(AEConfig::preset(Preset::VisionOnly, 768).unwrap(), 1).unwrap();
        assert_eq!(widths(&v.network), vec![768, 384, 96, 384, 768]);
        assert_eq!(v.network.linear_layer_count(), 4);
        assert!(matches!(v.network.stages().last(), Some(Stage::Linear(_))));

        let m = Autoencoder::build(AEConfig::preset(Preset::Multimodal, 836).unwrap(), 1).unwrap();
        assert_eq!(widths(&m.network), vec![836, 512, 256, 64, 256, 512, 836]);
        assert_eq!(m.network.linear_layer_count(), 6);
        assert!(m.network.linear_layer_count() > v.network.linear_layer_count());
        for s in &m.network.stages()[..5] {
            assert!(matches!(s, Stage::Block(_)));
        }
    }

    #[test]
    fn rejects_bad_widths_and_train_config() {
        assert!(AEConfig::custom(300, vec![100, 200], 0.1).is_err());
        assert!(AEConfig::custom(50, vec![100, 20], 0.1).is_err());
        assert!(AEConfig::custom(50, vec![20, 0], 0.1).is_err());
        assert!(AEConfig::preset(Preset::VisionOnly, 200).is_err());
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(zero.validate().is_err());
        let tiny = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(tiny.validate().is_err());
    }

    fn normal_set(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let protos: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                protos[i % 3]
                    .iter()
                    .map(|p| p + 0.05 * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect()
    }

    fn small_cfg(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 3e-3,
            seed,
            shuffle: true,
        }
    }

    #[test]
    fn loss_decreases_and_is_reproducible() {
        let data = normal_set(200, 24, 5);
        let cfg = AEConfig::custom(24, vec![12, 6], 0.1).unwrap();
        let a = train(Autoencoder::build(cfg.clone(), 9).unwrap(), &data, &small_cfg(50, 3)).unwrap();
        assert_eq!(a.loss_history.len(), 50);
        assert!(a.loss_history[49] < a.loss_history[0]);
        // dropout makes single epochs noisy; 5-epoch means should not climb
        let blocks: Vec<f64> = a.loss_history.chunks(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        let mut best = f64::INFINITY;
        for m in &blocks {
            assert!(*m <= best * 1.1, "{blocks:?}");
            best = best.min(*m);
        }

        let b = train(Autoencoder::build(cfg, 9).unwrap(), &data, &small_cfg(50, 3)).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn reconstruct_checks_width_and_is_deterministic() {
        let data = normal_set(20, 10, 1);
        let cfg = AEConfig::custom(10, vec![6, 3], 0.0).unwrap();
        let m = train(Autoencoder::build(cfg, 1).unwrap(), &data, &small_cfg(2, 1)).unwrap();
        assert!(m.reconstruct(&[0.0; 9]).is_err());
        let a = m.reconstruct(&data[0]).unwrap();
        let b = m.reconstruct(&data[0]).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let errs = m.reconstruction_errors(&data).unwrap();
        assert_eq!(errs.len(), data.len());
        let single = reconstruction_error(&data[3], &m.reconstruct(&data[3]).unwrap()).unwrap();
        assert!((errs[3] - single).abs() < 1e-12);
    }

    #[test]
    fn error_reduction_is_mean_absolute() {
        let v = vec![0.0; 768];
        let mut r = v.clone();
        r[0] = -1.0;
        r[1] = 1.0;
        assert_eq!(reconstruction_error(&v, &r).unwrap(), 2.0 / 768.0);
        assert_eq!(reconstruction_error(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn overfit_tiny_set_separates_from_random() {
        let data = normal_set(5, 12, 2);
        let cfg = AEConfig::custom(12, vec![8, 5], 0.0).unwrap();
        let train_cfg = TrainConfig {
            epochs: 1500,
            batch_size: 5,
            learning_rate: 1e-2,
            seed: 4,
            shuffle: false,
        };
        let m = train(Autoencoder::build(cfg, 2).unwrap(), &data, &train_cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let held_out: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let held = m.reconstruction_errors(&held_out).unwrap();
        let mean_held = held.iter().sum::<f64>() / held.len() as f64;
        let fit = m.reconstruction_errors(&data).unwrap();
        assert!(fit.iter().all(|e| *e < mean_held), "{fit:?} vs {mean_held}");
    }

    #[test]
    fn errors_do_not_depend_on_clip_order() {
        let data = normal_set(12, 10, 8);
        let cfg = AEConfig::custom(10, vec![6, 3], 0.1).unwrap();
        let m = train(Autoencoder::build(cfg, 3).unwrap(), &data, &small_cfg(3, 2)).unwrap();
        let fwd = m.reconstruction_errors(&data).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let mut back = m.reconstruction_errors(&rev).unwrap();
        back.reverse();
        assert_eq!(fwd, back);
    }
}
