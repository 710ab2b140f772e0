use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataOptions;
use crate::error::{Error, Result};
use crate::losses::ContentLoss;
use crate::networks::{DiscriminatorConfig, ExtractorConfig, GeneratorConfig};
use crate::radiometry::{DEFAULT_BLUR_SIGMA, DEFAULT_GAMMA, DEFAULT_MU};

/// Every training hyperparameter. Missing TOML keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Adversarial epochs, counted after the initialization epochs.
    pub epochs: u64,
    /// Content-only generator epochs run first.
    pub init_epochs: u64,
    /// Defaults to one pass over the LDR patch grid: ⌈patches / batch⌉.
    pub steps_per_epoch: Option<u64>,
    #[serde(alias = "lr_G")]
    pub lr_g: f64,
    #[serde(alias = "lr_D")]
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub w0: f64,
    pub mu: f64,
    pub gamma: f64,
    pub patch: usize,
    pub stride: usize,
    /// `[height, width]` training images are resized to before cropping;
    /// `[]` keeps native size.
    #[serde(with = "optional_size")]
    pub resize: Option<[usize; 2]>,
    pub batch: usize,
    pub seed: u64,
    pub min_patch: bool,
    /// Defaults to `patch / 16`, which pools the score map to 4×4.
    pub min_pool_window: Option<usize>,
    pub blur_set: bool,
    pub blur_sigma: f64,
    pub content: ContentLoss,
    /// Which exposure (1, 2 or 3) the content loss preserves.
    pub reference_index: usize,
    pub checkpoint_every: u64,
    /// Any loss with magnitude above this (or non-finite) aborts the run.
    pub loss_limit: f64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub extractor: ExtractorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            init_epochs: 10,
            steps_per_epoch: None,
            lr_g: 2.0e-4,
            lr_d: 1.0e-4,
            beta1: 0.5,
            beta2: 0.999,
            w0: 1.5,
            mu: DEFAULT_MU,
            gamma: DEFAULT_GAMMA,
            patch: 256,
            stride: 64,
            resize: Some([256, 384]),
            batch: 4,
            seed: 0,
            min_patch: true,
            min_pool_window: None,
            blur_set: true,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            content: ContentLoss::Perceptual,
            reference_index: 2,
            checkpoint_every: 10,
            loss_limit: 1e4,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            extractor: ExtractorConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Small networks and a random extractor, sized for CPU toy runs on
    /// 96×96 patches.
    pub fn toy() -> Self {
        TrainConfig {
            epochs: 10,
            init_epochs: 1,
            steps_per_epoch: Some(20),
            patch: 96,
            stride: 32,
            resize: None,
            batch: 2,
            checkpoint_every: 5,
            generator: GeneratorConfig {
                width: 8,
                res_blocks: 2,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                width: 8,
                ..DiscriminatorConfig::default()
            },
            extractor: ExtractorConfig::Random { width: 4, seed: 0 },
            ..TrainConfig::default()
        }
    }

    /// Parses TOML; a relative extractor weights path is taken relative to
    /// the config file.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg: TrainConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        if let ExtractorConfig::Vgg19 { weights, .. } = &mut cfg.extractor {
            if weights.is_relative() {
                if let Some(dir) = path.parent() {
                    *weights = dir.join(&*weights);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn min_pool(&self) -> Option<usize> {
        self.min_patch.then(|| self.min_pool_window.unwrap_or(self.patch / 16))
    }

    /// Zero-based index of the reference exposure.
    pub fn reference(&self) -> usize {
        self.reference_index - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
            ("w0", self.w0),
            ("mu", self.mu),
            ("blur_sigma", self.blur_sigma),
            ("loss_limit", self.loss_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.patch == 0 || self.patch % 4 != 0 {
            return bad(format!("patch must be a positive multiple of 4, got {}", self.patch));
        }
        if self.stride == 0 || self.batch == 0 {
            return bad("stride and batch must be positive".into());
        }
        if !(1..=3).contains(&self.reference_index) {
            return bad(format!("reference_index must be 1, 2 or 3, got {}", self.reference_index));
        }
        if self.steps_per_epoch == Some(0) || self.checkpoint_every == 0 {
            return bad("steps_per_epoch and checkpoint_every must be positive".into());
        }
        if let Some(w) = self.min_pool() {
            let side = self.patch / 4;
            if w == 0 || side % w != 0 {
                return bad(format!("min-pool window {w} does not divide the {side}x{side} score map"));
            }
        }
        if let Some([h, w]) = self.resize {
            if h < self.patch || w < self.patch {
                return bad(format!("resize {h}x{w} is smaller than the {} patch", self.patch));
            }
        }
        if self.generator.width == 0 || self.discriminator.width == 0 {
            return bad("network widths must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration with `epochs` left out, so a run may
    /// be resumed with a longer schedule.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("epochs");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn data_options(&self) -> DataOptions {
        DataOptions {
            resize: self.resize,
            gamma: self.gamma,
            mu: self.mu,
            blur_sigma: self.blur_sigma,
            blur_set: self.blur_set,
            patch: self.patch,
            stride: self.stride,
        }
    }
}

/// `Option<[h, w]>` as `[h, w]` or `[]`, since TOML has no null.
mod optional_size {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[usize; 2]>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|p| p.to_vec()).unwrap_or_default().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[usize; 2]>, D::Error> {
        match Vec::<usize>::deserialize(d)?.as_slice() {
            [] => Ok(None),
            &[h, w] => Ok(Some([h, w])),
            other => Err(D::Error::custom(format!("resize takes [] or [height, width], got {other:?}"))),
        }
    }
}
