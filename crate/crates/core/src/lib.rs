//! Follow-the-leader driving stack: a small neural library with grouped
//! convolutions, the classifier/regressor network pair, the hierarchical
//! tracking controller, a kinematic simulator and the frame log container.

pub mod control;
pub mod datalog;
pub mod kernels;
pub mod models;
pub mod sim;
pub mod nn;
pub mod tensor;

pub use tensor::{Tensor, TensorError};
