//! Layer helpers shared by the generator, discriminator and feature extractor.

use std::cell::RefCell;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{BatchStats, NormMode, Var};
use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Reflect,
    Zero,
}

/// Forward-pass context: bound parameters, normalization mode, and the batch
/// statistics gathered along the way.
pub struct Layers<'s, 't, T: Scalar> {
    pub params: Bound<'s, 't, T>,
    pub mode: NormMode,
    pub padding: Padding,
    stats: RefCell<Vec<(String, BatchStats<T>)>>,
}

impl<'s, 't, T: Scalar> Layers<'s, 't, T> {
    pub fn new(params: Bound<'s, 't, T>, mode: NormMode, padding: Padding) -> Self {
        Layers {
            params,
            mode,
            padding,
            stats: RefCell::new(Vec::new()),
        }
    }

    /// "Same" convolution (`k/2` padding) followed by the layer's bias.
    pub fn conv(&self, layer: &str, x: Var<'t, T>, stride: usize) -> Result<Var<'t, T>> {
        let w = self.params.get(&format!("{layer}.weight"))?;
        let b = self.params.get(&format!("{layer}.bias"))?;
        let pad = w.shape()[2] / 2;
        match self.padding {
            Padding::Reflect => x.pad_reflect(pad)?.conv2d(w, Some(b), stride, 0),
            Padding::Zero => x.conv2d(w, Some(b), stride, pad),
        }
    }

    /// ×2 transposed convolution (3×3, padding 1, output padding 1).
    pub fn conv_transpose(&self, layer: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let w = self.params.get(&format!("{layer}.weight"))?;
        let b = self.params.get(&format!("{layer}.bias"))?;
        x.conv_transpose2d(w, Some(b), 2, 1, 1)
    }

    pub fn bn(&self, layer: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let gamma = self.params.get(&format!("{layer}.gamma"))?;
        let beta = self.params.get(&format!("{layer}.beta"))?;
        let running = match self.mode {
            NormMode::Train => None,
            NormMode::Eval => Some((
                self.params.buffer(&format!("{layer}.running_mean"))?,
                self.params.buffer(&format!("{layer}.running_var"))?,
            )),
        };
        let (y, stats) = x.batch_norm(gamma, beta, self.mode, running, T::lit(BN_EPS))?;
        if let Some(s) = stats {
            self.stats.borrow_mut().push((layer.to_string(), s));
        }
        Ok(y)
    }

    pub fn take_stats(&self) -> Vec<(String, BatchStats<T>)> {
        std::mem::take(&mut self.stats.borrow_mut())
    }
}

/// Folds collected batch statistics into the store's running estimates.
pub fn apply_stats<T: Scalar>(store: &mut ParamStore<T>, stats: &[(String, BatchStats<T>)]) -> Result<()> {
    for (layer, s) in stats {
        store.update_running(layer, s, T::lit(BN_MOMENTUM))?;
    }
    Ok(())
}

fn normal_tensor<T: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

pub fn init_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    layer: &str,
    cin: usize,
    cout: usize,
    k: usize,
    std: f64,
    rng: &mut impl Rng,
) {
    store.insert_param(format!("{layer}.weight"), normal_tensor(&[cout, cin, k, k], std, rng));
    store.insert_param(format!("{layer}.bias"), Tensor::zeros(&[cout]));
}

pub fn init_conv_transpose<T: Scalar>(
    store: &mut ParamStore<T>,
    layer: &str,
    cin: usize,
    cout: usize,
    k: usize,
    std: f64,
    rng: &mut impl Rng,
) {
    store.insert_param(format!("{layer}.weight"), normal_tensor(&[cin, cout, k, k], std, rng));
    store.insert_param(format!("{layer}.bias"), Tensor::zeros(&[cout]));
}

pub fn init_bn<T: Scalar>(store: &mut ParamStore<T>, layer: &str, c: usize) {
    store.insert_param(format!("{layer}.gamma"), Tensor::ones(&[c]));
    store.insert_param(format!("{layer}.beta"), Tensor::zeros(&[c]));
    store.insert_buffer(format!("{layer}.running_mean"), Tensor::zeros(&[c]));
    store.insert_buffer(format!("{layer}.running_var"), Tensor::ones(&[c]));
}
