//! Fully connected ReLU network, cross entropy, momentum SGD and the training loop.

mod mlp;
mod sgd;
mod train;

pub use mlp::{cross_entropy, Dense, ForwardCache, Gradients, MlpModel};
pub use sgd::{sgd_momentum_step, Momentum};
pub use train::{effective_batch_size, evaluate_accuracy, train, LossMode, MetricsRecord, TrainConfig};
