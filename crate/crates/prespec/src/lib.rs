//! Finite-dimensional laboratory for closed symmetric operators, their
//! self-adjoint clones, Schatten-ideal diagnostics and character formulas.

pub mod character;
pub mod error;
pub mod ideals;
pub mod linalg;
pub mod opint;
pub mod opmodel;
pub mod report;
pub mod sample;
pub mod sparse;
pub mod triple;
pub mod window;

pub use error::{Error, Result};
