//! The training loop: batch assembly, forward/backward through the fused
//! embedding, SGD with a cosine schedule, EMA weights, evaluation and
//! checkpoints.

mod checkpoint;
mod config;
mod optim;
mod run;
mod step;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{AugmentConfig, FusionConfig, LossConfig, OptimConfig, PlusConfig, TrainConfig};
pub use optim::{cosine_lr, ema_update, sgd_step, EmaModel};
pub use run::{
    evaluate_params, run_training, Evaluation, RunOptions, TrainOutcome, BEST_FILE, CHECKPOINT_FILE, METRICS_FILE,
};
pub use step::{feature_matrix, MetricRecord, StepBatch, StepOutput, TrainState, Trainer};
