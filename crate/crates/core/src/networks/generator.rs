use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{shape_err, Result};
use crate::nn::{init_bn, init_conv, init_conv_transpose, Layers, Padding};
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Number of exposures (and encoder branches).
pub const BRANCHES: usize = 3;
/// Channels per branch input: an LDR exposure plus its gamma-mapped radiance.
pub const BRANCH_CHANNELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    /// Nearest-neighbour ×2 followed by a 3×3 convolution.
    #[default]
    Nearest,
    /// 3×3 stride-2 transposed convolution.
    Transposed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Channels after E1; E2 and E3 use 2× and 4× this.
    pub width: usize,
    pub res_blocks: usize,
    pub share_encoders: bool,
    pub upsample: Upsample,
    pub padding: Padding,
    pub init_std: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            width: 64,
            res_blocks: 6,
            share_encoders: true,
            upsample: Upsample::Nearest,
            padding: Padding::Reflect,
            init_std: 0.02,
        }
    }
}

/// Three-branch encoder, merge convolution, residual trunk and ×4 decoder.
#[derive(Clone, Debug)]
pub struct Generator {
    pub config: GeneratorConfig,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Self {
        Generator { config }
    }

    fn channels(&self) -> (usize, usize, usize) {
        let w = self.config.width;
        (w, 2 * w, 4 * w)
    }

    fn encoder_prefix(&self, branch: usize) -> String {
        if self.config.share_encoders {
            "G".to_string()
        } else {
            format!("G.branch{}", branch + 1)
        }
    }

    pub fn init<T: Scalar>(&self, rng: &mut impl Rng) -> ParamStore<T> {
        let (c1, c2, c3) = self.channels();
        let std = self.config.init_std;
        let mut s = ParamStore::new();
        let encoders = if self.config.share_encoders { 1 } else { BRANCHES };
        for b in 0..encoders {
            let p = self.encoder_prefix(b);
            init_conv(&mut s, &format!("{p}.E1.conv"), BRANCH_CHANNELS, c1, 7, std, rng);
            init_bn(&mut s, &format!("{p}.E1.bn"), c1);
            init_conv(&mut s, &format!("{p}.E2.down"), c1, c2, 3, std, rng);
            init_conv(&mut s, &format!("{p}.E2.conv"), c2, c2, 3, std, rng);
            init_bn(&mut s, &format!("{p}.E2.bn"), c2);
            init_conv(&mut s, &format!("{p}.E3.down"), c2, c3, 3, std, rng);
            init_conv(&mut s, &format!("{p}.E3.conv"), c3, c3, 3, std, rng);
            init_bn(&mut s, &format!("{p}.E3.bn"), c3);
        }
        init_conv(&mut s, "G.merge", BRANCHES * c3, c3, 3, std, rng);
        init_bn(&mut s, "G.merge.bn", c3);
        for k in 0..self.config.res_blocks {
            init_conv(&mut s, &format!("G.res{k}.conv1"), c3, c3, 3, std, rng);
            init_bn(&mut s, &format!("G.res{k}.bn1"), c3);
            init_conv(&mut s, &format!("G.res{k}.conv2"), c3, c3, 3, std, rng);
            init_bn(&mut s, &format!("G.res{k}.bn2"), c3);
        }
        for (name, cin, cout) in [("D1", c3, c2), ("D2", c2, c1)] {
            match self.config.upsample {
                Upsample::Nearest => init_conv(&mut s, &format!("G.{name}.up"), cin, cout, 3, std, rng),
                Upsample::Transposed => {
                    init_conv_transpose(&mut s, &format!("G.{name}.up"), cin, cout, 3, std, rng)
                }
            }
            init_conv(&mut s, &format!("G.{name}.conv"), cout, cout, 3, std, rng);
            init_bn(&mut s, &format!("G.{name}.bn"), cout);
        }
        init_conv(&mut s, "G.D3", c1, 3, 7, std, rng);
        s
    }

    fn encode<'t, T: Scalar>(&self, l: &Layers<'_, 't, T>, p: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = l.conv(&format!("{p}.E1.conv"), x, 1)?;
        let x = l.bn(&format!("{p}.E1.bn"), x)?.relu();
        let x = l.conv(&format!("{p}.E2.down"), x, 2)?;
        let x = l.conv(&format!("{p}.E2.conv"), x, 1)?;
        let x = l.bn(&format!("{p}.E2.bn"), x)?.relu();
        let x = l.conv(&format!("{p}.E3.down"), x, 2)?;
        let x = l.conv(&format!("{p}.E3.conv"), x, 1)?;
        Ok(l.bn(&format!("{p}.E3.bn"), x)?.relu())
    }

    fn up<'t, T: Scalar>(&self, l: &Layers<'_, 't, T>, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = match self.config.upsample {
            Upsample::Nearest => l.conv(&format!("G.{name}.up"), x.upsample_nearest2()?, 1)?,
            Upsample::Transposed => l.conv_transpose(&format!("G.{name}.up"), x)?,
        };
        let x = l.conv(&format!("G.{name}.conv"), x, 1)?;
        Ok(l.bn(&format!("G.{name}.bn"), x)?.relu())
    }

    pub fn residual_block<'t, T: Scalar>(
        &self,
        l: &Layers<'_, 't, T>,
        k: usize,
        x: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let y = l.conv(&format!("G.res{k}.conv1"), x, 1)?;
        let y = l.bn(&format!("G.res{k}.bn1"), y)?.relu();
        let y = l.conv(&format!("G.res{k}.conv2"), y, 1)?;
        let y = l.bn(&format!("G.res{k}.bn2"), y)?;
        Ok(x.add(y))
    }

    /// Maps three `[N, 6, H, W]` branch inputs to `[N, 3, H, W]` normalized
    /// radiance in `[0, 1]`. `H` and `W` must be multiples of 4.
    pub fn forward<'t, T: Scalar>(&self, l: &Layers<'_, 't, T>, branches: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        if branches.len() != BRANCHES {
            return shape_err(format!("generator needs {BRANCHES} branches, got {}", branches.len()));
        }
        let shape = branches[0].shape();
        let [_, c, h, w] = shape[..] else {
            return shape_err(format!("branch input must be NCHW, got {shape:?}"));
        };
        if c != BRANCH_CHANNELS {
            return shape_err(format!("branch input needs {BRANCH_CHANNELS} channels, got {c}"));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return shape_err(format!("generator input {h}x{w} is not divisible by 4"));
        }
        if branches.iter().any(|b| b.shape() != shape) {
            return shape_err("all branch inputs must share one shape");
        }
        let feats = branches
            .iter()
            .enumerate()
            .map(|(i, &b)| self.encode(l, &self.encoder_prefix(i), b))
            .collect::<Result<Vec<_>>>()?;
        let x = Var::concat_channels(&feats);
        let x = l.conv("G.merge", x, 1)?;
        let mut x = l.bn("G.merge.bn", x)?.relu();
        for k in 0..self.config.res_blocks {
            x = self.residual_block(l, k, x)?;
        }
        let x = self.up(l, "D1", x)?;
        let x = self.up(l, "D2", x)?;
        Ok(l.conv("G.D3", x, 1)?.sigmoid())
    }
}
