use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{NormMode, Tape, Var};
use crate::data::{derive_seed, SampleBatch};
use crate::error::{Error, Result};
use crate::losses::{
    content_loss, content_loss_mse, content_weight, discriminator_objective, generator_adversarial_objective,
    total_generator_loss, ContentLoss, LossReport,
};
use crate::networks::{Discriminator, FeatureExtractor, Generator};
use crate::nn::{apply_stats, Layers};
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Content loss only, generator only.
    Init,
    Adversarial,
}

impl Phase {
    pub fn tag(self) -> u64 {
        match self {
            Phase::Init => 0,
            Phase::Adversarial => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Adversarial => "adv",
        }
    }
}

/// Where the loop is: `epoch` counts within the phase, `step` within the epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Position {
    pub phase: Phase,
    pub epoch: u64,
    pub step: u64,
}

/// Networks, optimizers and the frozen extractor for one run.
pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_params: ParamStore<T>,
    pub d_params: ParamStore<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    pub extractor: FeatureExtractor<T>,
    pub position: Position,
    /// Reported in divergence errors.
    pub last_good: Option<PathBuf>,
}

fn finite_report(r: &LossReport, limit: f64) -> std::result::Result<(), String> {
    for (name, v) in [
        ("d_loss", r.d_loss),
        ("g_adv", r.g_adv),
        ("g_content", r.g_content),
        ("g_total", r.g_total),
    ] {
        if !v.is_finite() || v.abs() > limit {
            return Err(format!("{name} = {v}"));
        }
    }
    Ok(())
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let extractor = FeatureExtractor::load(&config.extractor)?;
        Ok(Self::with_extractor(config, extractor))
    }

    /// Fresh networks initialized from the config seed.
    pub fn with_extractor(config: TrainConfig, extractor: FeatureExtractor<T>) -> Self {
        let generator = Generator::new(config.generator.clone());
        let discriminator = Discriminator::new(config.discriminator.clone());
        let g_params = generator.init(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0x6e])));
        let d_params = discriminator.init(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0x64])));
        let opt_g = Adam::new(T::lit(config.lr_g), T::lit(config.beta1), T::lit(config.beta2));
        let opt_d = Adam::new(T::lit(config.lr_d), T::lit(config.beta1), T::lit(config.beta2));
        Trainer {
            config,
            generator,
            discriminator,
            g_params,
            d_params,
            opt_g,
            opt_d,
            extractor,
            position: Position {
                phase: Phase::Init,
                epoch: 0,
                step: 0,
            },
            last_good: None,
        }
    }

    pub fn w_con(&self) -> f64 {
        match self.position.phase {
            Phase::Init => self.config.w0,
            Phase::Adversarial => content_weight(self.position.epoch, self.config.w0),
        }
    }

    fn report(&self, d_loss: f64, g_adv: f64, g_content: f64) -> Result<LossReport> {
        let w_con = self.w_con();
        let g_total = total_generator_loss(g_adv, g_content, w_con).map_err(|e| self.diverged(e.to_string()))?;
        let r = LossReport {
            phase: self.position.phase.name().to_string(),
            epoch: self.position.epoch,
            step: self.position.step,
            d_loss,
            g_adv,
            g_content,
            w_con,
            g_total,
        };
        finite_report(&r, self.config.loss_limit).map_err(|d| self.diverged(d))?;
        Ok(r)
    }

    fn diverged(&self, detail: String) -> Error {
        Error::Diverged {
            epoch: self.position.epoch,
            step: self.position.step,
            detail: format!("{} phase: {detail}", self.position.phase.name()),
            last_good: self.last_good.clone(),
        }
    }

    fn content<'t>(&self, g_tm: Var<'t, T>, x_ref: Var<'t, T>) -> Result<Var<'t, T>> {
        match self.config.content {
            ContentLoss::Perceptual => content_loss(&self.extractor, g_tm, x_ref),
            ContentLoss::Mse => content_loss_mse(g_tm, x_ref),
        }
    }

    fn branch_vars<'t>(tape: &'t Tape<T>, batch: &SampleBatch<T>) -> Vec<Var<'t, T>> {
        batch.branches.iter().map(|b| tape.constant(b.clone())).collect()
    }

    /// Generator forward in inference mode (running statistics, no tape
    /// recording), returning `[N, 3, P, P]` normalized radiance.
    pub fn generate(&self, branches: &[Tensor<T>; 3]) -> Result<Tensor<T>> {
        let tape = Tape::no_grad();
        let l = Layers::new(self.g_params.bind(&tape, false), NormMode::Eval, self.config.generator.padding);
        let vars: Vec<_> = branches.iter().map(|b| tape.constant(b.clone())).collect();
        let out = self.generator.forward(&l, &vars)?;
        Ok((*out.value()).clone())
    }

    /// One content-only generator update.
    pub fn init_step(&mut self, batch: &SampleBatch<T>) -> Result<LossReport> {
        let tape = Tape::new();
        let mu = T::lit(self.config.mu);
        let lg = Layers::new(self.g_params.bind(&tape, true), NormMode::Train, self.config.generator.padding);
        let out = self.generator.forward(&lg, &Self::branch_vars(&tape, batch))?;
        let x_ref = tape.constant(batch.ldr(self.config.reference()));
        let c = self.content(out.mu_law(mu), x_ref)?;
        let c_val = c.value().item().as_f64();
        let report = self.report(0.0, 0.0, c_val)?;
        let mut grads = tape.backward(c);
        let g_grads = lg.params.collect_grads(&mut grads);
        let stats = lg.take_stats();
        drop(lg);
        self.opt_g.step(&mut self.g_params, &g_grads);
        apply_stats(&mut self.g_params, &stats)?;
        Ok(report)
    }

    /// Discriminator update on real, generated (detached) and blurred images.
    /// Returns the loss before the update.
    pub fn discriminator_step(&mut self, g_tm: &Tensor<T>, batch: &SampleBatch<T>) -> Result<f64> {
        d_update(
            &self.discriminator,
            &mut self.d_params,
            &mut self.opt_d,
            &self.config,
            g_tm,
            batch,
        )
        .map_err(|e| self.nonfinite_to_diverged(e))
    }

    fn nonfinite_to_diverged(&self, e: Error) -> Error {
        match e {
            Error::NonFinite(d) => self.diverged(d),
            other => other,
        }
    }

    /// One alternating step: D update against the current generator output,
    /// then a G update against the updated (frozen) D.
    pub fn train_step(&mut self, batch: &SampleBatch<T>) -> Result<LossReport> {
        let tape = Tape::new();
        let mu = T::lit(self.config.mu);
        let lg = Layers::new(self.g_params.bind(&tape, true), NormMode::Train, self.config.generator.padding);
        let out = self.generator.forward(&lg, &Self::branch_vars(&tape, batch))?;
        let g_tm = out.mu_law(mu);
        let g_tm_value = (*g_tm.value()).clone();

        let d_loss = d_update(
            &self.discriminator,
            &mut self.d_params,
            &mut self.opt_d,
            &self.config,
            &g_tm_value,
            batch,
        );
        let d_loss = match d_loss {
            Ok(v) => v,
            Err(e) => {
                drop(lg);
                return Err(self.nonfinite_to_diverged(e));
            }
        };

        let ld = Layers::new(self.d_params.bind(&tape, false), NormMode::Train, self.config.discriminator.padding);
        let g_adv = generator_adversarial_objective(&self.discriminator, &ld, g_tm, self.config.min_pool())?;
        let x_ref = tape.constant(batch.ldr(self.config.reference()));
        let c = self.content(g_tm, x_ref)?;
        let total = g_adv.add(c.scale(T::lit(self.w_con())));
        let report = self.report(d_loss, g_adv.value().item().as_f64(), c.value().item().as_f64())?;
        let mut grads = tape.backward(total);
        let g_grads = lg.params.collect_grads(&mut grads);
        let g_stats = lg.take_stats();
        drop(lg);
        drop(ld);
        self.opt_g.step(&mut self.g_params, &g_grads);
        apply_stats(&mut self.g_params, &g_stats)?;
        Ok(report)
    }

    /// Runs the step appropriate to the current phase.
    pub fn step(&mut self, batch: &SampleBatch<T>) -> Result<LossReport> {
        match self.position.phase {
            Phase::Init => self.init_step(batch),
            Phase::Adversarial => self.train_step(batch),
        }
    }
}

fn d_update<T: Scalar>(
    disc: &Discriminator,
    d_params: &mut ParamStore<T>,
    opt_d: &mut Adam<T>,
    config: &TrainConfig,
    g_tm: &Tensor<T>,
    batch: &SampleBatch<T>,
) -> Result<f64> {
    let tape = Tape::new();
    let ld = Layers::new(d_params.bind(&tape, true), NormMode::Train, config.discriminator.padding);
    let y = tape.constant(batch.hdr_targets.clone());
    let g = tape.constant(g_tm.clone());
    let b = match (&batch.blur_targets, config.blur_set) {
        (Some(b), true) => Some(tape.constant(b.clone())),
        _ => None,
    };
    let loss = discriminator_objective(disc, &ld, y, g, b)?;
    let value = loss.value().item().as_f64();
    if !value.is_finite() || value.abs() > config.loss_limit {
        return Err(Error::NonFinite(format!("d_loss = {value}")));
    }
    let mut grads = tape.backward(loss);
    let d_grads = ld.params.collect_grads(&mut grads);
    let stats = ld.take_stats();
    drop(ld);
    opt_d.step(d_params, &d_grads);
    apply_stats(d_params, &stats)?;
    Ok(value)
}
