//! Procedural radiance scenes and their bracketed exposures, for toy runs
//! and tests without a real dataset.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{derive_seed, save_manifest, DatasetManifest, LdrScene, Split};
use crate::error::Result;
use crate::image::Image;
use crate::io::{write_pfm, write_png};
use crate::radiometry::DEFAULT_GAMMA;

#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub train_scenes: usize,
    pub hdr_targets: usize,
    pub test_scenes: usize,
    pub height: usize,
    pub width: usize,
    pub exposure_times: [f64; 3],
    /// Horizontal shift (pixels) of the moving object in the short and long
    /// exposures relative to the middle one.
    pub motion: i64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            train_scenes: 2,
            hdr_targets: 8,
            test_scenes: 1,
            height: 160,
            width: 160,
            exposure_times: [0.25, 1.0, 4.0],
            motion: 3,
            seed: 0,
        }
    }
}

pub struct ToyDataset {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

struct Blob {
    cy: f64,
    cx: f64,
    r: f64,
    rgb: [f64; 3],
    square: bool,
}

impl Blob {
    fn covers(&self, y: f64, x: f64, dx: f64) -> bool {
        let (dy, ddx) = (y - self.cy, x - self.cx - dx);
        if self.square {
            dy.abs() <= self.r && ddx.abs() <= self.r
        } else {
            dy * dy + ddx * ddx <= self.r * self.r
        }
    }
}

/// Radiance of a random scene; `shift` moves the last (moving) object.
fn scene_radiance(seed: u64, h: usize, w: usize, shifts: &[i64]) -> Vec<Image<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.6..1.0));
    let base = rng.random_range(0.03..0.15);
    let slope = rng.random_range(0.05..0.4);
    let freq = rng.random_range(0.08..0.25);
    let mut blobs: Vec<Blob> = (0..rng.random_range(3..6))
        .map(|_| Blob {
            cy: rng.random_range(0.0..h as f64),
            cx: rng.random_range(0.0..w as f64),
            r: rng.random_range(4.0..(h.min(w) as f64 / 4.0)),
            rgb: std::array::from_fn(|_| rng.random_range(0.1..1.2)),
            square: rng.random_bool(0.5),
        })
        .collect();
    // a light source, saturated in the middle exposure
    let level = rng.random_range(4.0..12.0);
    blobs.push(Blob {
        cy: rng.random_range(0.2..0.8) * h as f64,
        cx: rng.random_range(0.2..0.8) * w as f64,
        r: rng.random_range(3.0..8.0),
        rgb: std::array::from_fn(|_| level * rng.random_range(0.8..1.0)),
        square: false,
    });
    // a deep shadow, underexposed in the short exposure
    blobs.push(Blob {
        cy: rng.random_range(0.0..h as f64),
        cx: rng.random_range(0.0..w as f64),
        r: rng.random_range(6.0..14.0),
        rgb: [rng.random_range(0.004..0.02); 3],
        square: true,
    });
    // the moving object
    blobs.push(Blob {
        cy: rng.random_range(0.3..0.7) * h as f64,
        cx: rng.random_range(0.3..0.7) * w as f64,
        r: rng.random_range(5.0..9.0),
        rgb: std::array::from_fn(|_| rng.random_range(0.3..1.5)),
        square: false,
    });
    let moving = blobs.len() - 1;
    shifts
        .iter()
        .map(|&dx| {
            Image::from_fn(h, w, 3, |c, y, x| {
                let (yf, xf) = (y as f64, x as f64);
                let mut v = tint[c] * (base + slope * xf / w as f64) * (1.0 + 0.5 * (freq * (xf + yf)).sin());
                for (i, b) in blobs.iter().enumerate() {
                    let shift = if i == moving { dx as f64 } else { 0.0 };
                    if b.covers(yf, xf, shift) {
                        v = b.rgb[c];
                    }
                }
                v
            })
        })
        .collect()
}

/// `clip((r·t)^(1/γ))`; 8-bit quantization happens when written as PNG.
fn expose(r: &Image<f64>, t: f64) -> Image<f64> {
    r.map(|v| (v * t).powf(1.0 / DEFAULT_GAMMA).clamp(0.0, 1.0))
}

fn write_stack(dir: &Path, name: &str, seed: u64, spec: &ToySpec) -> Result<(LdrScene, Image<f64>)> {
    let shifts = [-spec.motion, 0, spec.motion];
    let radiance = scene_radiance(seed, spec.height, spec.width, &shifts);
    let mut paths = Vec::with_capacity(3);
    for (k, (r, &t)) in radiance.iter().zip(&spec.exposure_times).enumerate() {
        let p = dir.join(format!("{name}_x{}.png", k + 1));
        write_png(&p, &expose(r, t))?;
        paths.push(p);
    }
    let scene = LdrScene {
        name: name.to_string(),
        paths: paths.try_into().expect("three paths"),
        exposure_times: spec.exposure_times,
        ground_truth: None,
    };
    Ok((scene, radiance[1].clone()))
}

/// Writes `train.json` (unpaired stacks and HDR targets) and `test.json`
/// (stacks with ground-truth radiance) into `dir`.
pub fn make_toy_dataset(dir: &Path, spec: &ToySpec) -> Result<ToyDataset> {
    std::fs::create_dir_all(dir)?;
    let mut train = DatasetManifest {
        ldr_scenes: Vec::new(),
        hdr_targets: Vec::new(),
        split: Split::Train,
    };
    for i in 0..spec.train_scenes {
        let (scene, _) = write_stack(dir, &format!("train{i}"), derive_seed(&[spec.seed, 1, i as u64]), spec)?;
        train.ldr_scenes.push(scene);
    }
    for i in 0..spec.hdr_targets {
        let r = scene_radiance(derive_seed(&[spec.seed, 2, i as u64]), spec.height, spec.width, &[0]);
        let p = dir.join(format!("target{i}.pfm"));
        write_pfm(&p, &r[0])?;
        train.hdr_targets.push(p);
    }
    let mut test = DatasetManifest {
        ldr_scenes: Vec::new(),
        hdr_targets: Vec::new(),
        split: Split::Test,
    };
    for i in 0..spec.test_scenes {
        let (mut scene, gt) = write_stack(dir, &format!("test{i}"), derive_seed(&[spec.seed, 3, i as u64]), spec)?;
        let p = dir.join(format!("test{i}_gt.pfm"));
        write_pfm(&p, &gt)?;
        scene.ground_truth = Some(p);
        test.ldr_scenes.push(scene);
    }
    let train_manifest = dir.join("train.json");
    let test_manifest = dir.join("test.json");
    save_manifest(&train_manifest, &train)?;
    save_manifest(&test_manifest, &test)?;
    Ok(ToyDataset {
        train_manifest,
        test_manifest,
    })
}
