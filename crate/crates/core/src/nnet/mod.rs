//! Acoustic network: TDNN and LSTMP hidden layers, softmax output, frame
//! cross-entropy training, weight transfer and checkpoints.

mod checkpoint;
mod layers;
mod model;
mod train;
mod transfer;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use layers::{Layer, LayerSpec, LstmpLayer, TdnnLayer};
pub use model::{
    softmax_rows, AcousticModel, Architecture, DropoutMasks, Gradients, InputNorm, OutputLayer,
    TrainingState,
};
pub use train::{
    learning_rate, phone_indices, train, EpochRecord, Example, TrainConfig, TrainingLog,
};
pub use transfer::{transfer_full, transfer_hidden};
