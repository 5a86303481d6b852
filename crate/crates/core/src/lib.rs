//! Free convolution by subordination, outlier prediction for spiked
//! unitarily invariant matrix models, and Monte Carlo verification.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod freeconv;
pub mod measures;
pub mod outliers;
pub mod rmt;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
