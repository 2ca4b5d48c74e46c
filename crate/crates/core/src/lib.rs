//! Hybrid regression/classification training on a small reverse-mode
//! autodiff engine.

pub mod autodiff;
pub mod data;
pub(crate) mod binio;
pub mod discretize;
pub mod error;
pub mod exec;
pub mod gradsuite;
pub mod losses;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
