use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{NormMode, Tape, Var};
use crate::error::{Error, Result};
use crate::io::{encode_archive, read_archive, ArrayData};
use crate::nn::{init_conv, Layers, Padding};
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// VGG19 convolutions up to the conv4_4 tap: (name, width multiple, pool after).
const VGG_LAYERS: [(&str, usize, bool); 12] = [
    ("conv1_1", 1, false),
    ("conv1_2", 1, true),
    ("conv2_1", 2, false),
    ("conv2_2", 2, true),
    ("conv3_1", 4, false),
    ("conv3_2", 4, false),
    ("conv3_3", 4, false),
    ("conv3_4", 4, true),
    ("conv4_1", 8, false),
    ("conv4_2", 8, false),
    ("conv4_3", 8, false),
    ("conv4_4", 8, false),
];

/// Downsampling factor between the input and the tap.
pub const VGG_TAP_STRIDE: usize = 8;

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractorConfig {
    /// Pretrained VGG19 weights stored as a tensor archive with arrays
    /// `vgg.conv1_1.weight`, `vgg.conv1_1.bias`, … `vgg.conv4_4.bias`.
    Vgg19 {
        weights: PathBuf,
        /// Expected hex SHA-256 of the weights file, checked when set.
        #[serde(default)]
        sha256: Option<String>,
        #[serde(default = "yes")]
        imagenet_norm: bool,
    },
    /// Seeded random VGG-topology extractor of reduced width, for toy runs
    /// and tests.
    Random {
        #[serde(default = "random_width")]
        width: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn yes() -> bool {
    true
}

fn random_width() -> usize {
    4
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig::Vgg19 {
            weights: PathBuf::from("weights/vgg19_conv4_4.bin"),
            sha256: None,
            imagenet_norm: true,
        }
    }
}

/// Frozen VGG19-topology network truncated at conv4_4, returning the
/// pre-activation tap.
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T: Scalar> {
    params: ParamStore<T>,
    normalize: bool,
    sha256: String,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn load(config: &ExtractorConfig) -> Result<Self> {
        match config {
            ExtractorConfig::Vgg19 {
                weights,
                sha256,
                imagenet_norm,
            } => Self::from_archive(weights, sha256.as_deref(), *imagenet_norm),
            ExtractorConfig::Random { width, seed } => Ok(Self::random(*width, *seed)),
        }
    }

    pub fn random(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (name, mult, _) in VGG_LAYERS {
            let cout = width * mult;
            let std = (2.0 / (cin * 9) as f64).sqrt();
            init_conv(&mut params, &format!("vgg.{name}"), cin, cout, 3, std, &mut rng);
            cin = cout;
        }
        let arrays: BTreeMap<_, _> = params.params().map(|(k, v)| (k.clone(), ArrayData::from_tensor(v))).collect();
        let bytes = encode_archive(&serde_json::Value::Null, &arrays).expect("in-memory archive");
        let sha256 = hex::encode(&bytes[bytes.len() - 32..]);
        FeatureExtractor {
            params,
            normalize: false,
            sha256,
        }
    }

    pub fn from_archive(path: &Path, expected_sha256: Option<&str>, normalize: bool) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "feature-extractor weights not found at {}. Export the ImageNet VGG19 \
                 convolutions conv1_1..conv4_4 (weights [out, in, 3, 3] and biases) into a tensor \
                 archive named vgg.<layer>.weight / vgg.<layer>.bias (format in README), place it \
                 there and optionally pin its hash with `extractor.sha256`; or use \
                 `kind = \"random\"` for toy runs",
                path.display()
            )));
        }
        let archive = read_archive(path)?;
        if let Some(want) = expected_sha256 {
            if !want.eq_ignore_ascii_case(&archive.sha256) {
                return Err(Error::Config(format!(
                    "feature-extractor weights {} have SHA-256 {}, expected {want}",
                    path.display(),
                    archive.sha256
                )));
            }
        }
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (name, _, _) in VGG_LAYERS {
            let w: crate::tensor::Tensor<T> = archive.tensor(&format!("vgg.{name}.weight"))?;
            let b = archive.tensor(&format!("vgg.{name}.bias"))?;
            let s = w.shape().to_vec();
            if s.len() != 4 || s[1] != cin || s[2] != 3 || s[3] != 3 || b.shape() != [s[0]] {
                return Err(Error::Config(format!("extractor layer {name} has unexpected shape {s:?}")));
            }
            cin = s[0];
            params.insert_param(format!("vgg.{name}.weight"), w);
            params.insert_param(format!("vgg.{name}.bias"), b);
        }
        Ok(FeatureExtractor {
            params,
            normalize,
            sha256: archive.sha256,
        })
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Hex SHA-256 of the weights (of their archive encoding for random extractors).
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    /// `[N, 3, H, W]` images in `[0, 1]` → `[N, C, H/8, W/8]` conv4_4 features.
    /// The weights enter the tape as constants and never receive gradients.
    pub fn features<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let l = Layers::new(self.params.bind(tape, false), NormMode::Eval, Padding::Zero);
        let mut x = if self.normalize {
            let scale: Vec<T> = IMAGENET_STD.iter().map(|s| T::lit(1.0 / s)).collect();
            let shift: Vec<T> = IMAGENET_MEAN.iter().zip(IMAGENET_STD).map(|(m, s)| T::lit(-m / s)).collect();
            x.channel_affine(&scale, &shift)
        } else {
            x
        };
        for (i, (name, _, pool)) in VGG_LAYERS.iter().enumerate() {
            x = l.conv(&format!("vgg.{name}"), x, 1)?;
            if i + 1 == VGG_LAYERS.len() {
                break;
            }
            x = x.relu();
            if *pool {
                x = x.max_pool2()?;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn tap_is_one_eighth() {
        let fx = FeatureExtractor::<f32>::random(2, 1);
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 3, 32, 24], 0.5));
        let f = fx.features(&tape, x).unwrap();
        assert_eq!(f.shape(), vec![1, 16, 4, 3]);
    }

    #[test]
    fn missing_weights_is_config_error_with_instructions() {
        let cfg = ExtractorConfig::Vgg19 {
            weights: "/nonexistent/vgg.bin".into(),
            sha256: None,
            imagenet_norm: true,
        };
        let err = FeatureExtractor::<f32>::load(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("conv4_4") && m.contains("sha256")));
    }

    #[test]
    fn random_is_seeded() {
        let a = FeatureExtractor::<f32>::random(2, 7);
        let b = FeatureExtractor::<f32>::random(2, 7);
        assert_eq!(a.params(), b.params());
        assert_eq!(a.sha256(), b.sha256());
        assert_ne!(a.sha256(), FeatureExtractor::<f32>::random(2, 8).sha256());
    }
}
