//! FFT-based periodic homogenization of two-dimensional linear elastic unit
//! cells in plane strain, with Recursive Projection Method stabilization of
//! the fixed-point iterations.

pub mod error;
pub mod fft;
pub mod field;
pub mod greens;
pub mod iteration;
pub mod microstructure;
pub mod oracle;
pub mod rpm;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
