//! Optimization, evaluation and validation harness.

mod checkpoint;
mod config;
mod gradcheck;
mod optim;
mod run;
mod sweep;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointHeader, TensorEntry, TensorRole, FORMAT_VERSION, MAGIC,
};
pub use config::{DatasetConfig, Encoding, TrainConfig};
pub use gradcheck::{gradient_check, relative_error, GradCheckOptions, GradCheckReport};
pub use optim::{adam_update, cosine_lr, AdamState, BETA1, BETA2, EPSILON};
pub use run::{
    encode_batch, evaluate, load_datasets, moving_average, train, train_network, train_on,
    EpochRecord, RunReport, Trained, MOVING_AVERAGE_WINDOW,
};
pub use sweep::{conv_spiking_layers, location_variant, sit_location_sweep, SweepReport, SweepRow};
