//! Dense-layer machinery shared by the recurrent, attention and stacking
//! models: activations, loss, initialization, Adam, early stopping, dropout
//! and the finite-difference gradient oracle.

pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod train;

pub use adam::{AdamConfig, AdamState, EarlyStopper};
pub use dense::{dense_forward, dropout_mask, mse_loss, sigmoid, Activation, DenseParams};
pub use gradcheck::{finite_difference_grad, relative_error};
pub use matrix::{dot, Matrix};
pub use params::Params;
pub use train::{fit, Example, TrainConfig, TrainReport, Trainable};
