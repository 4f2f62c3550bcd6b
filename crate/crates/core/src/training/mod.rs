//! Joint CTR/CVR training with the click-before-purchase restriction term,
//! early stopping on validation AUC, and text checkpoints.

mod checkpoint;
mod loss;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{restriction_loss, total_loss, LossParts, RestrictionMode};
pub use trainer::{fit, train, EpochStats, TrainConfig, TrainReport};
