//! The non-spatial graph network: entrywise messages gated by a learned
//! mix of operator-stack entries, with manual reverse-mode gradients.
//!
//! Submodules:
//! - [`mlp`]: two-layer perceptron applied to batches of rows.
//! - [`model`]: parameters, forward pass, and backward pass.
//! - [`loss`]: mean absolute error and cross-entropy with gradients.
//! - [`optim`]: SGD and Adam over the flattened parameter list.
//! - [`train`]: deterministic training loops over graph datasets.
//! - [`checkpoint`]: versioned JSON serialization of trained models.

pub mod checkpoint;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod train;

pub use loss::LossKind;
pub use mlp::Mlp;
pub use model::{ChannelMode, Model, ModelConfig, ModelGrads, ModelParams};
pub use optim::{OptimConfig, OptimKind, OptimState};
pub use train::{train, Dataset, TrainConfig, TrainOutcome};
