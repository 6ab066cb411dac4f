//! Brick-wall circuit optimization through differentiable TEBD on
//! charge-graded matrix product states.

pub mod autodiff;
pub mod circuit;
pub mod cost;
pub mod driver;
mod error;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod mps;
pub mod tensor;

pub use error::{Error, Result};
