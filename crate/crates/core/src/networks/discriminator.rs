use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{shape_err, Result};
use crate::nn::{init_bn, init_conv, Layers, Padding};
use crate::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Channels after C1; C2..C4 use 2×, 4× and 8× this.
    pub width: usize,
    pub leaky_slope: f64,
    pub padding: Padding,
    pub init_std: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            width: 32,
            leaky_slope: 0.2,
            padding: Padding::Reflect,
            init_std: 0.02,
        }
    }
}

/// PatchGAN discriminator: two stride-2 stages, so an `h × w` image yields an
/// `h/4 × w/4` map of raw (pre-sigmoid) scores.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig) -> Self {
        Discriminator { config }
    }

    pub fn init<T: Scalar>(&self, rng: &mut impl Rng) -> ParamStore<T> {
        let c = self.config.width;
        let std = self.config.init_std;
        let mut s = ParamStore::new();
        init_conv(&mut s, "D.C1", 3, c, 3, std, rng);
        init_conv(&mut s, "D.C2.down", c, 2 * c, 3, std, rng);
        init_conv(&mut s, "D.C2.conv", 2 * c, 2 * c, 3, std, rng);
        init_bn(&mut s, "D.C2.bn", 2 * c);
        init_conv(&mut s, "D.C3.down", 2 * c, 4 * c, 3, std, rng);
        init_conv(&mut s, "D.C3.conv", 4 * c, 4 * c, 3, std, rng);
        init_bn(&mut s, "D.C3.bn", 4 * c);
        init_conv(&mut s, "D.C4", 4 * c, 8 * c, 3, std, rng);
        init_bn(&mut s, "D.C4.bn", 8 * c);
        init_conv(&mut s, "D.C5", 8 * c, 1, 3, std, rng);
        s
    }

    /// `[N, 3, h, w]` → `[N, 1, h/4, w/4]` score map.
    pub fn forward<'t, T: Scalar>(&self, l: &Layers<'_, 't, T>, img: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = img.shape();
        let [_, 3, h, w] = shape[..] else {
            return shape_err(format!("discriminator needs [N, 3, h, w], got {shape:?}"));
        };
        if h % 4 != 0 || w % 4 != 0 {
            return shape_err(format!("discriminator input {h}x{w} is not divisible by 4"));
        }
        let a = T::lit(self.config.leaky_slope);
        let x = l.conv("D.C1", img, 1)?.leaky_relu(a);
        let x = l.conv("D.C2.down", x, 2)?.leaky_relu(a);
        let x = l.conv("D.C2.conv", x, 1)?;
        let x = l.bn("D.C2.bn", x)?.leaky_relu(a);
        let x = l.conv("D.C3.down", x, 2)?.leaky_relu(a);
        let x = l.conv("D.C3.conv", x, 1)?;
        let x = l.bn("D.C3.bn", x)?.leaky_relu(a);
        let x = l.conv("D.C4", x, 1)?;
        let x = l.bn("D.C4.bn", x)?.leaky_relu(a);
        l.conv("D.C5", x, 1)
    }
}
