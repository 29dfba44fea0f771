//! SGD with momentum on cross-entropy, balanced epochs and transfer initialization.

pub mod config;
pub mod loss;
pub mod sgd;
pub mod train;

pub use config::{Architecture, TrainConfig};
pub use loss::{argmax_rows, cross_entropy, cross_entropy_with_grad};
pub use sgd::{sgd_step, SgdConfig};
pub use train::{
    epochs_to_threshold, initial_params, train, train_cooling, EpochRecord, TrainOutcome, TrainState, Trainer,
    CHECKPOINT_FILE, LOG_FILE,
};
