//! Teacher-forced optimization with Adam, checkpointing, and validation-based
//! model selection by F1@O.

pub mod adam;
mod checkpoint;
mod config;
mod trainer;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::TrainConfig;
pub use trainer::{train, validation_f1_o, EpochStats, TrainOutcome, MAX_GRAD_NORM, VALIDATION_MAX_LEN};
