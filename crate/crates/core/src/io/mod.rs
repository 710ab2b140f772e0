//! File formats: PFM radiance, Radiance `.hdr` and PNG/JPEG through the
//! `image` crate, and the checksummed tensor archive used for checkpoints
//! and extractor weights.

mod archive;
mod codec;
mod pfm;

pub use archive::{encode_archive, read_archive, write_archive, Archive, ArrayData, ARCHIVE_MAGIC};
pub use codec::{read_hdr, read_ldr, resize, write_png};
pub use pfm::{read_pfm, write_pfm};

use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}
