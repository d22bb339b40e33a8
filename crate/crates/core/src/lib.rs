pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod cost;
pub mod data;
pub mod engine;
pub mod error;
pub mod infer;
pub mod network;
pub mod prune;
pub mod report;
pub mod tensor;
pub mod ternary;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
