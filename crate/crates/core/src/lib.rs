pub mod cli;
pub mod diagnostics;
pub mod ekeland;
pub mod error;
pub mod hypergrad;
pub mod inner;
pub mod linalg;
pub mod outer;
pub mod problem;

pub use error::{HpoError, Result};
