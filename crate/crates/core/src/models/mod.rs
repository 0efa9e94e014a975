//! Generator and self-supervised discriminator networks.

pub mod checkpoint;
pub mod discriminator;
pub mod generator;
pub mod layers;
pub mod model;

pub use discriminator::{DiscOutput, DiscriminatorConfig, Quadrant, SslDiscriminator};
pub use generator::{Generator, GeneratorConfig};
pub use model::{init_model, ModelConfig, TranslationModel, SUPPORTED_SIZES};
