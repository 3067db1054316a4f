//! Dense tensors with layer-level reverse-mode gradients, the tiny encoder
//! and heads, momentum SGD, gradient checking and the pre-training loops.

pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use model::{AuxClassifier, BatchForward, Dense, Encoder, Network, NetworkConfig, OutputGrads, Projector};
pub use optim::sgd_step;
pub use params::{ParamId, ParamSet};
pub use tape::{Tape, Var, NORM_EPS};
pub use train::{
    build_step_batch, init_params, loss_and_grad, loss_only, objective_loss, spd_similarity, train_spd,
    train_supervised_aux, window_mean, Checkpoint, Objective, Precision, Segment, SpdSimilarity, TrainConfig,
    ViewBatch, ViewOutputs, CHECKPOINT_VERSION,
};
