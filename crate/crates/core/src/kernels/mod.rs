//! Numeric kernels: cross-correlation, (grouped) convolution, pooling, dense,
//! activations, LSTM, and their gradients.

pub mod accounting;
pub mod activation;
pub mod conv;
pub mod dense;
pub mod linalg;
pub mod lstm;
pub mod pool;
pub mod xcorr;

pub use activation::{relu, softmax};
pub use conv::{conv2d, grouped_conv2d, ConvSpec};
pub use dense::dense;
pub use lstm::{lstm_sequence, LstmParams, LstmSpec, LstmState};
pub use pool::{maxpool2d, PoolSpec};
pub use xcorr::xcorr2d;
