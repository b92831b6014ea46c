//! Rigorous coupled-wave analysis for layered periodic structures.

pub mod derivatives;
pub mod error;
pub mod field;
pub mod fourier;
pub mod geometry;
pub mod kspace;
pub mod layer_eigen;
pub mod linalg;
pub mod scattering;

pub use error::{Error, Result};
