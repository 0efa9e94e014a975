//! Unpaired datasets, PNG codec and synthetic oracle tasks.

pub mod codec;
pub mod dataset;
pub mod synthetic;

pub use dataset::{load_dataset, DatasetSpec, ImageFolder, UnpairedDataset};
pub use synthetic::{generate_synthetic, oracle_translate, Manifest, Oracle, SyntheticTask, TaskKind};
