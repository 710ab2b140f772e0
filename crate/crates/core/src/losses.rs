//! Training objectives. Every image entering a loss is μ-law tonemapped.

use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{shape_err, Error, Result};
use crate::networks::{Discriminator, FeatureExtractor};
use crate::nn::Layers;
use crate::scalar::Scalar;

pub const DEFAULT_CONTENT_WEIGHT: f64 = 1.5;
pub const CONTENT_DECAY: f64 = 0.96;
pub const CONTENT_DECAY_EVERY: u64 = 10;

/// One logged training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub phase: String,
    pub epoch: u64,
    pub step: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_content: f64,
    pub w_con: f64,
    pub g_total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContentLoss {
    #[default]
    Perceptual,
    Mse,
}

fn same_shape<T: Scalar>(what: &str, a: Var<'_, T>, b: Var<'_, T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Discriminator loss from raw score maps: real → 1, generated and blurred → 0,
/// each term a mean binary cross-entropy.
pub fn discriminator_loss_from_scores<'t, T: Scalar>(
    real: Var<'t, T>,
    fake: Var<'t, T>,
    blur: Option<Var<'t, T>>,
) -> Var<'t, T> {
    let loss = real.bce_with_logits(T::one()).add(fake.bce_with_logits(T::zero()));
    match blur {
        Some(b) => loss.add(b.bce_with_logits(T::zero())),
        None => loss,
    }
}

/// Runs D separately on real, generated and (optionally) blurred tonemapped
/// images and combines the full-map scores.
pub fn discriminator_objective<'t, T: Scalar>(
    d: &Discriminator,
    layers: &Layers<'_, 't, T>,
    y_tm: Var<'t, T>,
    g_tm: Var<'t, T>,
    b_tm: Option<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    same_shape("discriminator inputs", y_tm, g_tm)?;
    if let Some(b) = b_tm {
        same_shape("discriminator inputs", y_tm, b)?;
    }
    let real = d.forward(layers, y_tm)?;
    let fake = d.forward(layers, g_tm)?;
    let blur = b_tm.map(|b| d.forward(layers, b)).transpose()?;
    Ok(discriminator_loss_from_scores(real, fake, blur))
}

/// `−E log σ(min_pool(F))`, or over the full map when `window` is `None`.
pub fn generator_adversarial_from_scores<'t, T: Scalar>(
    scores: Var<'t, T>,
    window: Option<usize>,
) -> Result<Var<'t, T>> {
    let f = match window {
        Some(w) => scores.min_pool(w)?,
        None => scores,
    };
    Ok(f.bce_with_logits(T::one()))
}

pub fn generator_adversarial_objective<'t, T: Scalar>(
    d: &Discriminator,
    layers: &Layers<'_, 't, T>,
    g_tm: Var<'t, T>,
    window: Option<usize>,
) -> Result<Var<'t, T>> {
    generator_adversarial_from_scores(d.forward(layers, g_tm)?, window)
}

/// Mean absolute difference of extractor features at the conv4_4 tap.
pub fn content_loss<'t, T: Scalar>(
    extractor: &FeatureExtractor<T>,
    g_tm: Var<'t, T>,
    x_ref: Var<'t, T>,
) -> Result<Var<'t, T>> {
    same_shape("content loss inputs", g_tm, x_ref)?;
    let tape = g_tm.tape();
    let fa = extractor.features(tape, g_tm)?;
    let fb = extractor.features(tape, x_ref)?;
    Ok(fa.l1_mean(fb))
}

pub fn content_loss_mse<'t, T: Scalar>(g_tm: Var<'t, T>, x_ref: Var<'t, T>) -> Result<Var<'t, T>> {
    same_shape("content loss inputs", g_tm, x_ref)?;
    Ok(g_tm.mse_mean(x_ref))
}

/// `w0 · 0.96^⌊epoch/10⌋`.
pub fn content_weight(epoch: u64, w0: f64) -> f64 {
    w0 * CONTENT_DECAY.powi((epoch / CONTENT_DECAY_EVERY) as i32)
}

/// `g_adv + w_con · g_content`, rejecting non-finite inputs.
pub fn total_generator_loss<T: Scalar>(g_adv: T, g_content: T, w_con: T) -> Result<T> {
    for (name, v) in [("g_adv", g_adv), ("g_content", g_content), ("w_con", w_con)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(g_adv + w_con * g_content)
}
