pub mod autodiff;
pub mod cli;
pub mod curriculum;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod losses;
pub mod files;
pub mod operator;
pub mod optim;
pub mod parallel;
pub mod plot;
pub mod problems;
pub mod spectral;
pub mod spline;
pub mod tensor;

pub use error::{Error, Result};
