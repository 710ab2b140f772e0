#![allow(dead_code)]

use std::path::Path;

use hdrfuse::data::{load_manifest, DatasetManifest};
use hdrfuse::networks::{DiscriminatorConfig, ExtractorConfig, GeneratorConfig};
use hdrfuse::synthetic::{make_toy_dataset, ToySpec};
use hdrfuse::training::TrainConfig;

/// Two-step epochs on 32×32 patches with width-2 networks.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        init_epochs: 1,
        steps_per_epoch: Some(2),
        patch: 32,
        stride: 32,
        batch: 1,
        checkpoint_every: 1,
        generator: GeneratorConfig {
            width: 2,
            res_blocks: 1,
            ..GeneratorConfig::default()
        },
        discriminator: DiscriminatorConfig {
            width: 2,
            ..DiscriminatorConfig::default()
        },
        extractor: ExtractorConfig::Random { width: 2, seed: 0 },
        ..TrainConfig::toy()
    }
}

pub fn toy_manifests(dir: &Path) -> (DatasetManifest, DatasetManifest) {
    let toy = make_toy_dataset(dir, &ToySpec::default()).unwrap();
    (
        load_manifest(&toy.train_manifest).unwrap(),
        load_manifest(&toy.test_manifest).unwrap(),
    )
}
