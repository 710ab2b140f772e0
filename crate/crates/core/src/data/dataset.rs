use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{read_hdr, read_ldr, resize, write_pfm, write_png};
use crate::radiometry::{gamma_map, make_blur_target, mu_law_tonemap, normalize_hdr, LdrImage};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::manifest::DatasetManifest;
use super::patches::{crop_patches, patch_offsets};

#[derive(Clone, Debug, PartialEq)]
pub struct DataOptions {
    /// Training images are resized to `[height, width]` before cropping.
    pub resize: Option<[usize; 2]>,
    pub gamma: f64,
    pub mu: f64,
    pub blur_sigma: f64,
    pub blur_set: bool,
    pub patch: usize,
    pub stride: usize,
}

/// An exposure stack held in memory, with its valid patch offsets.
#[derive(Clone, Debug)]
pub struct TrainScene<T> {
    pub name: String,
    pub exposures: [Image<T>; 3],
    pub times: [T; 3],
    pub offsets: Vec<(usize, usize)>,
}

/// A normalized, tonemapped HDR target and its tonemapped blur copy.
#[derive(Clone, Debug)]
pub struct TrainTarget<T> {
    pub path: PathBuf,
    pub tonemapped: Image<T>,
    pub blur_tonemapped: Option<Image<T>>,
    pub offsets: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub scenes: Vec<TrainScene<T>>,
    pub targets: Vec<TrainTarget<T>>,
    pub options: DataOptions,
}

fn maybe_resize<T: Scalar>(img: Image<T>, size: Option<[usize; 2]>) -> Result<Image<T>> {
    match size {
        Some([h, w]) => resize(&img, h, w),
        None => Ok(img),
    }
}

/// An LDR exposure concatenated with its gamma-mapped radiance (6 channels).
pub fn branch_input<T: Scalar>(ldr: &Image<T>, time: T, gamma: T) -> Result<Image<T>> {
    let x = LdrImage::new(ldr.clone(), time)?;
    let h = gamma_map(&x, gamma)?;
    Image::concat_channels(&[ldr, h.image()])
}

/// The three `[1, 6, H, W]` generator inputs of a full stack.
pub fn branch_inputs<T: Scalar>(exposures: &[Image<T>; 3], times: &[T; 3], gamma: T) -> Result<[Tensor<T>; 3]> {
    let mut out = Vec::with_capacity(3);
    for k in 0..3 {
        out.push(branch_input(&exposures[k], times[k], gamma)?.to_tensor());
    }
    Ok(out.try_into().expect("three branches"))
}

impl<T: Scalar> Dataset<T> {
    /// Decodes every file, resizes, normalizes and tonemaps HDR targets and
    /// precomputes blur targets (one per distinct file).
    pub fn load(manifest: &DatasetManifest, options: DataOptions) -> Result<Self> {
        if manifest.ldr_scenes.is_empty() || manifest.hdr_targets.is_empty() {
            return Err(Error::Config(format!(
                "training needs LDR scenes and HDR targets, got {} and {}",
                manifest.ldr_scenes.len(),
                manifest.hdr_targets.len()
            )));
        }
        let mu = T::lit(options.mu);
        let mut scenes = Vec::with_capacity(manifest.ldr_scenes.len());
        for s in &manifest.ldr_scenes {
            let exposures = s
                .paths
                .iter()
                .map(|p| maybe_resize(read_ldr(p)?, options.resize))
                .collect::<Result<Vec<_>>>()?;
            let exposures: [Image<T>; 3] = exposures.try_into().expect("three exposures");
            let offsets = patch_offsets(exposures[0].height(), exposures[0].width(), options.patch, options.stride)?;
            if offsets.is_empty() {
                return Err(Error::Config(format!(
                    "scene `{}` ({}x{}) is smaller than the {} patch",
                    s.name,
                    exposures[0].height(),
                    exposures[0].width(),
                    options.patch
                )));
            }
            scenes.push(TrainScene {
                name: s.name.clone(),
                exposures,
                times: s.exposure_times.map(T::lit),
                offsets,
            });
        }
        let mut cache: HashMap<PathBuf, (Image<T>, Option<Image<T>>)> = HashMap::new();
        let mut targets = Vec::with_capacity(manifest.hdr_targets.len());
        for path in &manifest.hdr_targets {
            if !cache.contains_key(path) {
                let raw = maybe_resize(read_hdr::<T>(path)?, options.resize)?;
                let norm = normalize_hdr(&raw)?.image;
                let tm = mu_law_tonemap(&norm, mu)?.0;
                let blur = if options.blur_set {
                    let b = make_blur_target(&norm, T::lit(options.blur_sigma))?;
                    Some(mu_law_tonemap(&b, mu)?.0)
                } else {
                    None
                };
                cache.insert(path.clone(), (tm, blur));
            }
            let (tm, blur) = cache[path].clone();
            let offsets = patch_offsets(tm.height(), tm.width(), options.patch, options.stride)?;
            if offsets.is_empty() {
                return Err(Error::Config(format!(
                    "HDR target {} is smaller than the {} patch",
                    path.display(),
                    options.patch
                )));
            }
            targets.push(TrainTarget {
                path: path.clone(),
                tonemapped: tm,
                blur_tonemapped: blur,
                offsets,
            });
        }
        Ok(Dataset {
            scenes,
            targets,
            options,
        })
    }

    /// Number of LDR patch positions, before augmentation.
    pub fn ldr_patch_count(&self) -> usize {
        self.scenes.iter().map(|s| s.offsets.len()).sum()
    }
}

/// Writes every grid patch of a manifest to `out/ldr/<scene>/` (PNG) and
/// `out/hdr/` (PFM). Returns the number of files written.
pub fn materialize_patches(
    manifest: &DatasetManifest,
    patch: usize,
    stride: usize,
    resize_to: Option<[usize; 2]>,
    out: &Path,
) -> Result<usize> {
    let mut written = 0;
    for (id, s) in manifest.ldr_scenes.iter().enumerate() {
        for (k, p) in s.paths.iter().enumerate() {
            let img = maybe_resize(read_ldr::<f32>(p)?, resize_to)?;
            for rec in crop_patches(&img, id, patch, stride)? {
                let f = out
                    .join("ldr")
                    .join(&s.name)
                    .join(format!("x{}_{:04}_{:04}.png", k + 1, rec.top, rec.left));
                write_png(&f, &rec.pixels)?;
                written += 1;
            }
        }
    }
    for (id, p) in manifest.hdr_targets.iter().enumerate() {
        let img = maybe_resize(read_hdr::<f32>(p)?, resize_to)?;
        for rec in crop_patches(&img, id, patch, stride)? {
            let f = out.join("hdr").join(format!("y{id:04}_{:04}_{:04}.pfm", rec.top, rec.left));
            write_pfm(&f, &rec.pixels)?;
            written += 1;
        }
    }
    Ok(written)
}
