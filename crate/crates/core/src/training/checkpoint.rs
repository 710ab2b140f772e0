use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_archive, write_archive, ArrayData};
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::scalar::{DType, Scalar};

use super::config::TrainConfig;
use super::trainer::Trainer;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Counters and provenance stored in the archive header. Sampling is a pure
/// function of `(seed, phase, epoch, step)`, so the seed in `config` plus
/// `epochs_completed` fully determine the data order after a resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub dtype: DType,
    pub config_hash: String,
    /// Epochs finished, initialization epochs included.
    pub epochs_completed: u64,
    pub global_step: u64,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
    pub extractor_sha256: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub meta: CheckpointMeta,
    pub g_params: ParamStore<T>,
    pub d_params: ParamStore<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
}

fn put_store<T: Scalar>(arrays: &mut BTreeMap<String, ArrayData>, s: &ParamStore<T>) {
    for (k, v) in s.params() {
        arrays.insert(format!("param/{k}"), ArrayData::from_tensor(v));
    }
    for (k, v) in s.buffers() {
        arrays.insert(format!("buffer/{k}"), ArrayData::from_tensor(v));
    }
}

fn put_adam<T: Scalar>(arrays: &mut BTreeMap<String, ArrayData>, tag: &str, a: &Adam<T>) {
    let (m, v) = a.moments();
    for (k, t) in m {
        arrays.insert(format!("adam/{tag}/m/{k}"), ArrayData::from_tensor(t));
    }
    for (k, t) in v {
        arrays.insert(format!("adam/{tag}/v/{k}"), ArrayData::from_tensor(t));
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_trainer(t: &Trainer<T>, epochs_completed: u64, global_step: u64) -> Self {
        Checkpoint {
            meta: CheckpointMeta {
                format: CHECKPOINT_FORMAT,
                dtype: T::DTYPE,
                config_hash: t.config.hash(),
                epochs_completed,
                global_step,
                opt_g_steps: t.opt_g.steps(),
                opt_d_steps: t.opt_d.steps(),
                extractor_sha256: t.extractor.sha256().to_string(),
                config: t.config.clone(),
            },
            g_params: t.g_params.clone(),
            d_params: t.d_params.clone(),
            opt_g: t.opt_g.clone(),
            opt_d: t.opt_d.clone(),
        }
    }

    /// Copies weights and optimizer state into `t`, which must have been
    /// built from a compatible config.
    pub fn restore_into(&self, t: &mut Trainer<T>) -> Result<()> {
        t.g_params.check_compatible(&self.g_params)?;
        t.d_params.check_compatible(&self.d_params)?;
        t.g_params = self.g_params.clone();
        t.d_params = self.d_params.clone();
        t.opt_g = self.opt_g.clone();
        t.opt_d = self.opt_d.clone();
        Ok(())
    }
}

/// Atomic write; returns the file's SHA-256.
pub fn save_checkpoint<T: Scalar>(path: &Path, ck: &Checkpoint<T>) -> Result<String> {
    let mut arrays = BTreeMap::new();
    // parameter names start with "G." or "D.", so both stores share a namespace
    put_store(&mut arrays, &ck.g_params);
    put_store(&mut arrays, &ck.d_params);
    put_adam(&mut arrays, "G", &ck.opt_g);
    put_adam(&mut arrays, "D", &ck.opt_d);
    let meta = serde_json::to_value(&ck.meta)?;
    write_archive(path, &meta, &arrays)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let archive = read_archive(path)?;
    let meta: CheckpointMeta = serde_json::from_value(archive.meta.clone())?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unsupported checkpoint format {}", meta.format)));
    }
    let mut g_params = ParamStore::new();
    let mut d_params = ParamStore::new();
    let c = &meta.config;
    let mk = |lr: f64| Adam::<T>::new(T::lit(lr), T::lit(c.beta1), T::lit(c.beta2));
    let mut opt_g = mk(c.lr_g);
    let mut opt_d = mk(c.lr_d);
    opt_g.steps = meta.opt_g_steps;
    opt_d.steps = meta.opt_d_steps;
    for (name, data) in &archive.arrays {
        let t = data.to_tensor::<T>()?;
        let parts: Vec<&str> = name.splitn(4, '/').collect();
        let store = |k: &str| if k.starts_with("G.") { Some(0) } else if k.starts_with("D.") { Some(1) } else { None };
        match parts.as_slice() {
            ["param", k] | ["buffer", k] => {
                let s = match store(k) {
                    Some(0) => &mut g_params,
                    Some(_) => &mut d_params,
                    None => return Err(Error::Format(format!("unexpected array `{name}`"))),
                };
                if parts[0] == "param" {
                    s.insert_param(*k, t);
                } else {
                    s.insert_buffer(*k, t);
                }
            }
            ["adam", tag, mv, k] => {
                let opt = match *tag {
                    "G" => &mut opt_g,
                    "D" => &mut opt_d,
                    _ => return Err(Error::Format(format!("unexpected array `{name}`"))),
                };
                match *mv {
                    "m" => opt.m.insert(k.to_string(), t),
                    "v" => opt.v.insert(k.to_string(), t),
                    _ => return Err(Error::Format(format!("unexpected array `{name}`"))),
                };
            }
            _ => return Err(Error::Format(format!("unexpected array `{name}`"))),
        }
    }
    Ok(Checkpoint {
        meta,
        g_params,
        d_params,
        opt_g,
        opt_d,
    })
}

pub fn checkpoint_path(run_dir: &Path, epochs_completed: u64) -> PathBuf {
    run_dir.join("ckpt").join(format!("epoch_{epochs_completed:04}.bin"))
}

/// The checkpoint with the highest epoch number in `run_dir/ckpt`.
pub fn latest_checkpoint(run_dir: &Path) -> Result<Option<PathBuf>> {
    let dir = run_dir.join("ckpt");
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        let n = p
            .file_name()
            .and_then(|f| f.to_str())
            .and_then(|f| f.strip_prefix("epoch_"))
            .and_then(|f| f.strip_suffix(".bin"))
            .and_then(|f| f.parse::<u64>().ok());
        if let Some(n) = n {
            if best.as_ref().is_none_or(|(b, _)| n > *b) {
                best = Some((n, p));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}
