//! From-scratch networks for predicting liquid-lens settings: a convolutional
//! pose estimator, an LSTM/BiLSTM pose predictor and a dense lens regressor,
//! trained block by block with mini-batch SGD.

pub mod blocks;
pub mod complexity;
pub mod error;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod power;
pub mod predictor;
pub mod spec;
pub mod tensor;
pub mod train;

pub use blocks::{BlockId, Net};
pub use error::{Error, Result};
pub use params::Params;
pub use spec::NetSpec;
pub use tensor::Tensor;
