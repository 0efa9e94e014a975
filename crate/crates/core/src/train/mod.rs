//! Alternating generator/discriminator optimization with checkpoints.

pub mod config;
pub mod fit;
pub mod optim;
pub mod pool;
pub mod schedule;
pub mod trainer;

pub use config::TrainConfig;
pub use fit::{fit, fit_with, latest_checkpoint, resolve_checkpoint, save_checkpoint, test_cycle_mae};
pub use optim::Adam;
pub use pool::ImagePool;
pub use schedule::lr_schedule;
pub use trainer::{StepLog, TrainState, Trainer};
