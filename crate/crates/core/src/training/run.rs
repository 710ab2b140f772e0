use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, DatasetManifest, UnpairedSampler};
use crate::error::{Error, Result};
use crate::eval::{infer, write_inference, GeneratorFuser};
use crate::io::write_atomic;
use crate::losses::LossReport;
use crate::radiometry::LdrImage;
use crate::scalar::Scalar;

use super::checkpoint::{checkpoint_path, latest_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
use super::config::TrainConfig;
use super::trainer::{Phase, Position, Trainer};

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from the newest checkpoint in the run directory.
    pub resume: bool,
    /// Resume despite a config-hash mismatch, or overwrite an existing run.
    pub force: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_checkpoint: PathBuf,
    pub epochs_completed: u64,
    pub global_step: u64,
    /// Reports produced by this invocation.
    pub reports: Vec<LossReport>,
}

/// Global epoch index → phase and epoch within it.
pub fn split_epoch(config: &TrainConfig, global: u64) -> (Phase, u64) {
    if global < config.init_epochs {
        (Phase::Init, global)
    } else {
        (Phase::Adversarial, global - config.init_epochs)
    }
}

fn global_epoch(config: &TrainConfig, r: &serde_json::Value) -> Option<u64> {
    let epoch = r.get("epoch")?.as_u64()?;
    match r.get("phase")?.as_str()? {
        "init" => Some(epoch),
        _ => Some(config.init_epochs + epoch),
    }
}

/// Drops log lines from epochs at or after `keep_before` (work that a resume
/// will redo).
fn truncate_log(path: &Path, config: &TrainConfig, keep_before: u64) -> Result<()> {
    if !path.is_file() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if global_epoch(config, &v).is_none_or(|g| g < keep_before) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write_atomic(path, kept.as_bytes())
}

fn write_samples<T: Scalar>(trainer: &Trainer<T>, data: &Dataset<T>, dir: &Path) -> Result<()> {
    let fuser = GeneratorFuser {
        generator: &trainer.generator,
        params: &trainer.g_params,
        gamma: trainer.config.gamma,
    };
    for scene in data.scenes.iter().take(2) {
        let mut stack = Vec::with_capacity(3);
        for (img, &t) in scene.exposures.iter().zip(&scene.times) {
            stack.push(LdrImage::new(img.clone(), t)?);
        }
        let stack: [LdrImage<T>; 3] = stack.try_into().ok().expect("three exposures");
        let out = infer(&fuser, &stack, trainer.config.mu)?;
        write_inference(dir, &out, &scene.name)?;
    }
    Ok(())
}

/// Initialization epochs, then adversarial epochs, writing
/// `config.resolved.toml`, `log.jsonl`, `ckpt/epoch_XXXX.bin` and
/// `samples/epoch_XXXX/` under `out`.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    manifest: &DatasetManifest,
    out: &Path,
    opts: &TrainOptions,
) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let log_path = out.join("log.jsonl");
    if !opts.resume && !opts.force && (log_path.exists() || out.join("ckpt").exists()) {
        return Err(Error::Config(format!(
            "{} already holds a run; pass --resume to continue it or --force to overwrite",
            out.display()
        )));
    }
    let data = Dataset::<T>::load(manifest, config.data_options())?;
    let mut trainer = Trainer::<T>::new(config.clone())?;

    let mut start = 0;
    let mut global_step = 0;
    let mut final_checkpoint = None;
    if opts.resume {
        match latest_checkpoint(out)? {
            Some(p) => {
                let ck = load_checkpoint::<T>(&p)?;
                if ck.meta.config_hash != config.hash() {
                    if !opts.force {
                        return Err(Error::ConfigMismatch {
                            expected: config.hash(),
                            found: ck.meta.config_hash,
                        });
                    }
                    log::warn!("resuming {} despite a config-hash mismatch", p.display());
                }
                ck.restore_into(&mut trainer)?;
                start = ck.meta.epochs_completed;
                global_step = ck.meta.global_step;
                trainer.last_good = Some(p.clone());
                final_checkpoint = Some(p);
                truncate_log(&log_path, config, start)?;
                log::info!("resuming at epoch {}", start + 1);
            }
            None => {
                log::warn!("no checkpoint in {}; starting from scratch", out.display());
                std::fs::write(&log_path, b"")?;
            }
        }
    } else {
        std::fs::write(&log_path, b"")?;
    }
    write_atomic(&out.join("config.resolved.toml"), config.to_toml()?.as_bytes())?;

    let mut log = OpenOptions::new().create(true).append(true).open(&log_path)?;
    let header = serde_json::json!({
        "event": "start",
        "start_epoch": start,
        "config_hash": config.hash(),
        "extractor_sha256": trainer.extractor.sha256(),
        "content_weight_schedule": "w0 * 0.96^floor(epoch/10), adversarial epochs",
        "dtype": T::DTYPE,
    });
    writeln!(log, "{header}")?;

    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| data.ldr_patch_count().div_ceil(config.batch) as u64);
    let sampler = UnpairedSampler::new(config.seed, config.batch);
    let total = config.init_epochs + config.epochs;
    let mut reports = Vec::new();
    for g in start..total {
        let (phase, epoch) = split_epoch(config, g);
        for step in 0..steps {
            trainer.position = Position { phase, epoch, step };
            let batch = sampler.sample(&data, phase.tag(), epoch, step)?;
            let report = trainer.step(&batch)?;
            writeln!(log, "{}", serde_json::to_string(&report)?)?;
            reports.push(report);
            global_step += 1;
        }
        if let Some(r) = reports.last() {
            log::info!(
                "epoch {}/{} ({} {}): d {:.4} g_adv {:.4} content {:.4} w {:.4}",
                g + 1,
                total,
                phase.name(),
                epoch,
                r.d_loss,
                r.g_adv,
                r.g_content,
                r.w_con
            );
        }
        let done = g + 1;
        if done % config.checkpoint_every == 0 || done == total {
            let path = checkpoint_path(out, done);
            save_checkpoint(&path, &Checkpoint::from_trainer(&trainer, done, global_step))?;
            write_samples(&trainer, &data, &out.join("samples").join(format!("epoch_{done:04}")))?;
            trainer.last_good = Some(path.clone());
            final_checkpoint = Some(path);
        }
    }
    log.flush()?;
    let final_checkpoint = match final_checkpoint {
        Some(p) => p,
        None => {
            let path = checkpoint_path(out, start);
            save_checkpoint(&path, &Checkpoint::from_trainer(&trainer, start, global_step))?;
            path
        }
    };
    Ok(RunSummary {
        final_checkpoint,
        epochs_completed: total.max(start),
        global_step,
        reports,
    })
}
