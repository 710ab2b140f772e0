//! Initialization phase, alternating adversarial training, checkpoints and
//! run directories.

mod checkpoint;
mod config;
mod run;
mod trainer;

pub use checkpoint::{
    checkpoint_path, latest_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta,
    CHECKPOINT_FORMAT,
};
pub use config::TrainConfig;
pub use run::{split_epoch, train, RunSummary, TrainOptions};
pub use trainer::{Phase, Position, Trainer};
