//! Edge-aware graph attention networks for multi-label node classification,
//! built on a self-contained reverse-mode autodiff core.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encode;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod head;
pub mod layer;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{GipaError, Result};
pub use tensor::{Activation, Tape, Tensor};
