use crate::error::{invalid, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Four rotations times two flip states.
pub const DIHEDRAL_COUNT: u8 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchRecord<T> {
    pub pixels: Image<T>,
    pub scene_id: usize,
    pub top: usize,
    pub left: usize,
    /// `k + 4·flip`: `k` counter-clockwise quarter turns applied after an
    /// optional horizontal flip.
    pub augmentation_id: u8,
}

/// Top-left corners of every full `patch × patch` window on the stride grid.
pub fn patch_offsets(height: usize, width: usize, patch: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || stride == 0 {
        return invalid(format!("patch ({patch}) and stride ({stride}) must be positive"));
    }
    if height < patch || width < patch {
        return Ok(Vec::new());
    }
    let rows = (height - patch) / stride + 1;
    let cols = (width - patch) / stride + 1;
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r * stride, c * stride)))
        .collect())
}

/// All full patches on the stride grid, row-major. Images smaller than the
/// patch give an empty list and a warning.
pub fn crop_patches<T: Scalar>(
    image: &Image<T>,
    scene_id: usize,
    patch: usize,
    stride: usize,
) -> Result<Vec<PatchRecord<T>>> {
    let offsets = patch_offsets(image.height(), image.width(), patch, stride)?;
    if offsets.is_empty() {
        log::warn!(
            "scene {scene_id}: {}x{} image is smaller than the {patch}x{patch} patch",
            image.height(),
            image.width()
        );
    }
    offsets
        .into_iter()
        .map(|(top, left)| {
            Ok(PatchRecord {
                pixels: image.crop(top, left, patch, patch)?,
                scene_id,
                top,
                left,
                augmentation_id: 0,
            })
        })
        .collect()
}

pub fn apply_dihedral<T: Scalar>(img: &Image<T>, id: u8) -> Result<Image<T>> {
    if id >= DIHEDRAL_COUNT {
        return invalid(format!("augmentation id {id} outside 0..8"));
    }
    let mut out = if id >= 4 { img.flip_horizontal() } else { img.clone() };
    for _ in 0..id % 4 {
        out = out.rotate90();
    }
    Ok(out)
}

/// The eight dihedral variants of a square patch, ids 0..7.
pub fn augment_dihedral<T: Scalar>(p: &PatchRecord<T>) -> Result<Vec<PatchRecord<T>>> {
    if p.pixels.height() != p.pixels.width() {
        return invalid(format!(
            "dihedral augmentation needs a square patch, got {}x{}",
            p.pixels.height(),
            p.pixels.width()
        ));
    }
    (0..DIHEDRAL_COUNT)
        .map(|id| {
            Ok(PatchRecord {
                pixels: apply_dihedral(&p.pixels, id)?,
                augmentation_id: id,
                ..p.clone()
            })
        })
        .collect()
}
