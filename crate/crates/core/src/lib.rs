pub mod baseline;
pub mod dual;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod matrix;
pub mod model;
pub mod sdp;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, ComplexScalar, C64};
