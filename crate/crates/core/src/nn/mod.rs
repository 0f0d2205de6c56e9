//! Minimal dense network kernel: layers, L1 loss, Adam and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod network;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{
    batchnorm_forward, dropout_forward, linear_forward, relu, BatchNormLayer, DropoutLayer,
    LinearLayer, Mode,
};
pub use loss::{l1_loss, l1_loss_grad};
pub use matrix::Matrix;
pub use network::{Gradients, LinearBlock, Network, Stage};
