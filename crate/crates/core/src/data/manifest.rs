use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// One exposure stack, short to long. Paths are absolute after loading.
#[derive(Clone, Debug, PartialEq)]
pub struct LdrScene {
    pub name: String,
    pub paths: [PathBuf; 3],
    pub exposure_times: [f64; 3],
    /// Paired radiance, only meaningful for test splits.
    pub ground_truth: Option<PathBuf>,
}

/// LDR stacks and HDR targets. The two lists are unrelated (unpaired).
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub ldr_scenes: Vec<LdrScene>,
    pub hdr_targets: Vec<PathBuf>,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    paths: Vec<PathBuf>,
    exposure_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default)]
    ldr_scenes: Vec<RawScene>,
    #[serde(default)]
    hdr_targets: Vec<PathBuf>,
    #[serde(default)]
    split: Split,
}

fn schema(scene: &str, reason: impl Into<String>) -> Error {
    Error::Schema {
        scene: scene.to_string(),
        reason: reason.into(),
    }
}

/// Width and height from the file header, without decoding the raster.
fn probe(path: &Path) -> Result<(usize, usize)> {
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        let head: Vec<u8> = std::fs::read(path)?.into_iter().take(64).collect();
        let text = String::from_utf8_lossy(&head);
        let mut it = text.split_ascii_whitespace();
        let ok = matches!(it.next(), Some("PF" | "Pf"));
        let w = it.next().and_then(|v| v.parse().ok());
        let h = it.next().and_then(|v| v.parse().ok());
        return match (ok, w, h) {
            (true, Some(w), Some(h)) => Ok((w, h)),
            _ => Err(Error::Format(format!("{} is not a PFM file", path.display()))),
        };
    }
    let (w, h) = image::image_dimensions(path)?;
    Ok((w as usize, h as usize))
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn check_file(scene: &str, path: &Path) -> Result<(usize, usize)> {
    if !path.is_file() {
        return Err(schema(scene, format!("missing file {}", path.display())));
    }
    probe(path).map_err(|e| schema(scene, format!("cannot decode {}: {e}", path.display())))
}

/// Reads and validates a JSON manifest. Relative paths are resolved against
/// the manifest's directory; every file must exist and have a readable header.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let raw: RawManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut ldr_scenes = Vec::with_capacity(raw.ldr_scenes.len());
    for (i, s) in raw.ldr_scenes.into_iter().enumerate() {
        let name = s.name.unwrap_or_else(|| format!("scene{i}"));
        if s.paths.len() != 3 {
            return Err(schema(&name, format!("expected 3 exposures, got {}", s.paths.len())));
        }
        if s.exposure_times.len() != 3 {
            return Err(schema(&name, format!("expected 3 exposure times, got {}", s.exposure_times.len())));
        }
        let t = [s.exposure_times[0], s.exposure_times[1], s.exposure_times[2]];
        if t.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(schema(&name, "exposure times must be positive seconds"));
        }
        if !(t[0] < t[1] && t[1] < t[2]) {
            return Err(schema(&name, format!("exposure times {t:?} are not strictly increasing")));
        }
        let paths = [0, 1, 2].map(|k| resolve(root, &s.paths[k]));
        let dims = paths.iter().map(|p| check_file(&name, p)).collect::<Result<Vec<_>>>()?;
        if dims.iter().any(|d| *d != dims[0]) {
            return Err(schema(&name, format!("exposures differ in size: {dims:?}")));
        }
        let ground_truth = s.ground_truth.map(|g| resolve(root, &g));
        if let Some(g) = &ground_truth {
            let gd = check_file(&name, g)?;
            if gd != dims[0] {
                return Err(schema(&name, format!("ground truth is {gd:?}, exposures are {:?}", dims[0])));
            }
        }
        ldr_scenes.push(LdrScene {
            name,
            paths,
            exposure_times: t,
            ground_truth,
        });
    }
    let mut hdr_targets = Vec::with_capacity(raw.hdr_targets.len());
    for (i, p) in raw.hdr_targets.iter().enumerate() {
        let p = resolve(root, p);
        check_file(&format!("hdr_targets[{i}]"), &p)?;
        hdr_targets.push(p);
    }
    Ok(DatasetManifest {
        ldr_scenes,
        hdr_targets,
        split: raw.split,
    })
}

/// Writes a manifest, storing paths relative to its directory where possible.
pub fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    let root = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let raw = RawManifest {
        ldr_scenes: m
            .ldr_scenes
            .iter()
            .map(|s| RawScene {
                name: Some(s.name.clone()),
                paths: s.paths.iter().map(|p| rel(p)).collect(),
                exposure_times: s.exposure_times.to_vec(),
                ground_truth: s.ground_truth.as_deref().map(rel),
            })
            .collect(),
        hdr_targets: m.hdr_targets.iter().map(|p| rel(p)).collect(),
        split: m.split,
    };
    crate::io::write_atomic(path, &serde_json::to_vec_pretty(&raw)?)
}
