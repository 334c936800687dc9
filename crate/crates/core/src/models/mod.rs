//! Trainable models with hand-written gradients.

pub mod ae;
pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod train;

pub use ae::{Activation, AeBatch, AeGrad, TiedAutoencoder};
pub use mlp::{Dense, Evaluation, MlpClassifier, MlpGrad, MlpShape};
pub use optim::{Adam, OptimizerKind, Schedule};
pub use train::{fit, train_ae, train_ae_dense, train_mlp, TrainConfig, TrainReport};

/// Exposes parameters as flat blocks in a fixed order.
pub trait Parametric {
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    fn params(&self) -> Vec<&[f64]>;
}

/// Gradient blocks, in the same order as [`Parametric::params`].
pub trait Gradients {
    fn slices(&self) -> Vec<&[f64]>;
}
