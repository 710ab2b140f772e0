use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hdrfuse::data::{load_manifest, materialize_patches};
use hdrfuse::eval::{eval_command, infer, load_stack, write_inference, Model};
use hdrfuse::losses::ContentLoss;
use hdrfuse::synthetic::{make_toy_dataset, ToySpec};
use hdrfuse::training::{train, TrainConfig, TrainOptions};
use hdrfuse::Scalar;

#[derive(Parser)]
#[command(name = "hdrfuse", version, about = "Unpaired multi-exposure HDR fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Content {
    Perceptual,
    Mse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator/discriminator pair on an unpaired manifest
    Train {
        /// TOML config; defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Run directory
        #[arg(long)]
        out: PathBuf,
        /// Score the full discriminator map instead of min-pooled windows
        #[arg(long)]
        no_min_patch: bool,
        /// Train without blurred targets as extra negatives
        #[arg(long)]
        no_blur_set: bool,
        #[arg(long, value_enum)]
        content: Option<Content>,
        /// Exposure (1, 2 or 3) the content loss compares against
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<u64>,
        /// Continue from the newest checkpoint in --out
        #[arg(long)]
        resume: bool,
        /// Overwrite an existing run, or resume despite a config mismatch
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value = "f32")]
        precision: Precision,
    },
    /// Fuse one exposure stack with a trained checkpoint
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        /// Short, middle and long exposure
        #[arg(long, num_args = 3, required = true)]
        inputs: Vec<PathBuf>,
        /// Exposure times in seconds
        #[arg(long, num_args = 3, required = true)]
        times: Vec<f64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM of tonemapped outputs on a test manifest
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Write every grid patch of a manifest to disk
    CropPatches {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 256)]
        patch: usize,
        #[arg(long, default_value_t = 64)]
        stride: usize,
        /// Resize to HEIGHT WIDTH before cropping
        #[arg(long, num_args = 2)]
        resize: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a small synthetic dataset and a matching toy config
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run_train<T: Scalar>(cfg: &TrainConfig, manifest: &PathBuf, out: &PathBuf, opts: &TrainOptions) -> Result<()> {
    let m = load_manifest(manifest)?;
    let s = train::<T>(cfg, &m, out, opts)?;
    println!(
        "trained {} epochs ({} steps); checkpoint {}",
        s.epochs_completed,
        s.global_step,
        s.final_checkpoint.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            manifest,
            out,
            no_min_patch,
            no_blur_set,
            content,
            reference,
            seed,
            epochs,
            resume,
            force,
            precision,
        } => {
            let mut cfg = match &config {
                Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => TrainConfig::default(),
            };
            if no_min_patch {
                cfg.min_patch = false;
            }
            if no_blur_set {
                cfg.blur_set = false;
            }
            if let Some(c) = content {
                cfg.content = match c {
                    Content::Perceptual => ContentLoss::Perceptual,
                    Content::Mse => ContentLoss::Mse,
                };
            }
            if let Some(r) = reference {
                cfg.reference_index = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.validate()?;
            let opts = TrainOptions { resume, force };
            match precision {
                Precision::F32 => run_train::<f32>(&cfg, &manifest, &out, &opts),
                Precision::F64 => run_train::<f64>(&cfg, &manifest, &out, &opts),
            }
        }
        Command::Infer {
            ckpt,
            inputs,
            times,
            out,
        } => {
            let model = Model::<f32>::from_checkpoint(&ckpt)?;
            let stack = load_stack::<f32>(&inputs, &times)?;
            let result = infer(&model.fuser(), &stack, model.config.mu)?;
            write_inference(&out, &result, "fused")?;
            println!("wrote {}", out.join("fused.pfm").display());
            Ok(())
        }
        Command::Eval { ckpt, manifest, out } => {
            let model = Model::<f32>::from_checkpoint(&ckpt)?;
            let m = load_manifest(&manifest)?;
            let table = eval_command(&model.fuser(), &m, model.config.mu)?;
            table.write(&out)?;
            print!("{}", table.to_markdown());
            Ok(())
        }
        Command::CropPatches {
            manifest,
            patch,
            stride,
            resize,
            out,
        } => {
            let size = match resize.as_deref() {
                None => None,
                Some(&[h, w]) => Some([h, w]),
                Some(v) => bail!("--resize takes HEIGHT WIDTH, got {v:?}"),
            };
            let m = load_manifest(&manifest)?;
            let n = materialize_patches(&m, patch, stride, size, &out)?;
            println!("wrote {n} patches to {}", out.display());
            Ok(())
        }
        Command::MakeToy { out, seed } => {
            let toy = make_toy_dataset(&out, &ToySpec { seed, ..ToySpec::default() })?;
            let cfg_path = out.join("toy.toml");
            std::fs::write(&cfg_path, TrainConfig::toy().to_toml()?)?;
            println!(
                "wrote {}, {} and {}",
                toy.train_manifest.display(),
                toy.test_manifest.display(),
                cfg_path.display()
            );
            Ok(())
        }
    }
}
