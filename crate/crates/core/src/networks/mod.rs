//! Generator, patch discriminator and frozen feature extractor.
//!
//! All three are fully convolutional. Parameter names are fixed (for
//! example `G.E1.conv.weight`, `G.res0.conv1.weight`, `D.C5.bias`) and form
//! the checkpoint layout.

mod discriminator;
mod extractor;
mod generator;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use extractor::{ExtractorConfig, FeatureExtractor, VGG_TAP_STRIDE};
pub use generator::{Generator, GeneratorConfig, Upsample};
