//! Self-supervised CycleGAN for unpaired image translation with little data.

pub mod augment;
pub mod batch;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod train;
pub mod translate;

pub use batch::{ImageBatch, RealBatch};
pub use error::{Error, Result};
