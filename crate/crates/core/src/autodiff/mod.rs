//! Reverse-mode differentiation over dense networks, Glorot initialization
//! and the Adam optimizer.

mod adam;
mod gradcheck;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{compare_gradients, gradient_check, relative_error, GradCheckReport, OutputLoss, Probe};
pub use network::{sigmoid, Activation, Layer, NetSpec, Network, Tape, LEAKY_SLOPE};
pub use tensor::{Matrix, ParamTensor, Shape};
