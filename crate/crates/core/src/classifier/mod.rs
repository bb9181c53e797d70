//! The CNN for each classification task: construction, training,
//! inference and checkpoints.

mod checkpoint;
mod model;
mod task;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{
    build_model, count_parameters, parameter_names, CnnModel, ForwardPass, Geometry, CONV_CHANNELS,
    CONV_DROPOUT, HIDDEN_DROPOUT, HIDDEN_UNITS, KERNEL_SIZE,
};
pub use task::TaskKind;
pub use train::{
    accuracy, argmax, extract_embedding, infer_set, predict, predict_many, predict_set, train,
    train_with_observer, ExampleSet, HistoryRecord, Prediction, TrainConfig, TrainHistory,
};
