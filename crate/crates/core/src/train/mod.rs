//! Optimization, checkpoints, evaluation and the ablation study.

mod adam;
mod checkpoint;
mod config;
mod eval;
mod trainer;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{
    read_tensors, write_tensors, Checkpoint, MANIFEST_FILE, OPTIMIZER_FILE, PARAMS_FILE, VOCAB_FILE,
};
pub use config::{parse_experiment_config, TrainConfig};
pub use eval::{ablate, ablation_table, evaluate, AblationRow, Evaluation, Variant, ABLATION_VARIANTS};
pub use trainer::{EpochSummary, TrainLogRecord, Trainer};
