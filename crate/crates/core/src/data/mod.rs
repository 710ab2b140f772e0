//! Dataset manifests, patch cropping, dihedral augmentation and unpaired
//! batch sampling.

mod dataset;
mod manifest;
mod patches;
mod sampler;

pub use dataset::{branch_input, branch_inputs, materialize_patches, DataOptions, Dataset, TrainScene, TrainTarget};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, LdrScene, Split};
pub use patches::{apply_dihedral, augment_dihedral, crop_patches, patch_offsets, PatchRecord, DIHEDRAL_COUNT};
pub use sampler::{derive_seed, sample_unpaired_batch, SampleBatch, UnpairedSampler};
