//! Inference on exposure stacks and tonemapped-image evaluation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::autograd::{NormMode, Tape};
use crate::data::{branch_inputs, DatasetManifest};
use crate::error::{shape_err, Error, Result};
use crate::image::Image;
use crate::io::{read_hdr, read_ldr, write_atomic, write_pfm, write_png};
use crate::metrics::{psnr, ssim};
use crate::networks::Generator;
use crate::nn::{Layers, Padding};
use crate::params::ParamStore;
use crate::radiometry::{mu_law_tonemap, normalize_hdr, HdrImage, LdrImage, TonemappedImage};
use crate::scalar::Scalar;
use crate::training::{load_checkpoint, TrainConfig};

/// Anything that turns an aligned three-exposure stack into normalized
/// radiance of the same size.
pub trait Fuser<T: Scalar> {
    fn fuse(&self, exposures: &[Image<T>; 3], times: &[T; 3]) -> Result<Image<T>>;
}

/// A generator evaluated with its running normalization statistics. Inputs
/// whose sides are not multiples of 4 are mirror-padded and the output is
/// cropped back.
pub struct GeneratorFuser<'a, T: Scalar> {
    pub generator: &'a Generator,
    pub params: &'a ParamStore<T>,
    pub gamma: f64,
}

impl<T: Scalar> Fuser<T> for GeneratorFuser<'_, T> {
    fn fuse(&self, exposures: &[Image<T>; 3], times: &[T; 3]) -> Result<Image<T>> {
        let (h, w, _) = exposures[0].dims();
        if exposures.iter().any(|e| e.dims() != exposures[0].dims()) {
            return shape_err("exposures of one stack differ in size");
        }
        let padded = exposures
            .iter()
            .map(|e| e.pad_reflect_to_multiple(4))
            .collect::<Result<Vec<_>>>()?;
        let padded: [Image<T>; 3] = padded.try_into().expect("three exposures");
        let inputs = branch_inputs(&padded, times, T::lit(self.gamma))?;
        let tape = Tape::no_grad();
        let padding: Padding = self.generator.config.padding;
        let l = Layers::new(self.params.bind(&tape, false), NormMode::Eval, padding);
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = self.generator.forward(&l, &vars)?;
        Image::from_tensor(&out.value(), 0)?.crop(0, 0, h, w)
    }
}

/// Generator weights and settings restored from a checkpoint.
pub struct Model<T: Scalar> {
    pub generator: Generator,
    pub params: ParamStore<T>,
    pub config: TrainConfig,
}

impl<T: Scalar> Model<T> {
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ck = load_checkpoint::<T>(path)?;
        let generator = Generator::new(ck.meta.config.generator.clone());
        let fresh: ParamStore<T> = generator.init(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        fresh
            .check_compatible(&ck.g_params)
            .map_err(|e| Error::Config(format!("checkpoint does not match its generator config: {e}")))?;
        Ok(Model {
            generator,
            params: ck.g_params,
            config: ck.meta.config,
        })
    }

    pub fn fuser(&self) -> GeneratorFuser<'_, T> {
        GeneratorFuser {
            generator: &self.generator,
            params: &self.params,
            gamma: self.config.gamma,
        }
    }
}

pub struct Inference<T> {
    pub hdr: HdrImage<T>,
    pub tonemapped: TonemappedImage<T>,
}

pub fn infer<T: Scalar>(fuser: &dyn Fuser<T>, stack: &[LdrImage<T>; 3], mu: f64) -> Result<Inference<T>> {
    let exposures = stack.each_ref().map(|x| x.image().clone());
    let times = stack.each_ref().map(|x| x.exposure_time());
    let out = fuser.fuse(&exposures, &times)?;
    if out.dims() != exposures[0].dims() {
        return shape_err(format!("fused image {:?} differs from input {:?}", out.dims(), exposures[0].dims()));
    }
    let hdr = HdrImage::new(out)?;
    let tonemapped = mu_law_tonemap(&hdr, T::lit(mu))?;
    Ok(Inference { hdr, tonemapped })
}

/// Writes `hdr.pfm` (radiance) and `tonemapped.png` into `dir`.
pub fn write_inference<T: Scalar>(dir: &Path, inf: &Inference<T>, stem: &str) -> Result<()> {
    write_pfm(&dir.join(format!("{stem}.pfm")), inf.hdr.image())?;
    write_png(&dir.join(format!("{stem}_tm.png")), inf.tonemapped.image())
}

pub fn load_stack<T: Scalar>(paths: &[impl AsRef<Path>], times: &[f64]) -> Result<[LdrImage<T>; 3]> {
    if paths.len() != 3 || times.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "need 3 exposures and 3 times, got {} and {}",
            paths.len(),
            times.len()
        )));
    }
    let mut out = Vec::with_capacity(3);
    for (p, &t) in paths.iter().zip(times) {
        out.push(LdrImage::new(read_ldr(p.as_ref())?, T::lit(t))?);
    }
    Ok(out.try_into().ok().expect("three exposures"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub scene: String,
    pub psnr_tm: f64,
    pub ssim_tm: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvalTable {
    pub records: Vec<EvalRecord>,
}

impl EvalTable {
    /// Arithmetic mean over scenes, `None` for an empty table.
    pub fn mean(&self) -> Option<EvalRecord> {
        if self.records.is_empty() {
            return None;
        }
        let n = self.records.len() as f64;
        let avg = |f: fn(&EvalRecord) -> f64| self.records.iter().map(f).sum::<f64>() / n;
        Some(EvalRecord {
            scene: "mean".into(),
            psnr_tm: avg(|r| r.psnr_tm),
            ssim_tm: avg(|r| r.ssim_tm),
            runtime_ms: avg(|r| r.runtime_ms),
        })
    }

    fn rows(&self) -> impl Iterator<Item = EvalRecord> + '_ {
        self.records.iter().cloned().chain(self.mean())
    }

    /// `hdrvdp` and `tmqi` are left empty for external tools to fill.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scene,psnr_tm,ssim_tm,hdrvdp,tmqi,runtime_ms\n");
        for r in self.rows() {
            let _ = writeln!(s, "{},{:.6},{:.6},,,{:.3}", r.scene, r.psnr_tm, r.ssim_tm, r.runtime_ms);
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "metrics on mu-law tonemapped images\n\n| scene | PSNR-T (dB) | SSIM-T | runtime (ms) |\n|---|---|---|---|\n",
        );
        for r in self.rows() {
            let _ = writeln!(s, "| {} | {:.3} | {:.4} | {:.1} |", r.scene, r.psnr_tm, r.ssim_tm, r.runtime_ms);
        }
        s
    }

    /// Writes the CSV to `csv` and the markdown table next to it (`.md`).
    pub fn write(&self, csv: &Path) -> Result<()> {
        write_atomic(csv, self.to_csv().as_bytes())?;
        write_atomic(&csv.with_extension("md"), self.to_markdown().as_bytes())
    }
}

/// PSNR and SSIM between the tonemapped fused output and the tonemapped,
/// percentile-normalized ground truth, per scene in manifest order. Scenes
/// without ground truth are skipped with a warning.
pub fn eval_command<T: Scalar>(fuser: &dyn Fuser<T>, manifest: &DatasetManifest, mu: f64) -> Result<EvalTable> {
    if manifest.ldr_scenes.is_empty() {
        log::warn!("test manifest has no scenes; the table is empty");
    }
    let mut table = EvalTable::default();
    for scene in &manifest.ldr_scenes {
        let Some(gt_path) = &scene.ground_truth else {
            log::warn!("scene `{}` has no ground truth, skipped", scene.name);
            continue;
        };
        let stack = load_stack::<T>(&scene.paths, &scene.exposure_times)?;
        let gt = normalize_hdr(&read_hdr::<T>(gt_path)?)?.image;
        let gt_tm = mu_law_tonemap(&gt, T::lit(mu))?;
        let start = Instant::now();
        let out = infer(fuser, &stack, mu)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        if !out.tonemapped.image().same_shape(gt_tm.image()) {
            return shape_err(format!("scene `{}`: output and ground truth differ in size", scene.name));
        }
        table.records.push(EvalRecord {
            scene: scene.name.clone(),
            psnr_tm: psnr(out.tonemapped.image(), gt_tm.image())?.as_f64(),
            ssim_tm: ssim(out.tonemapped.image(), gt_tm.image())?.as_f64(),
            runtime_ms,
        });
    }
    Ok(table)
}
