pub mod annotate;
pub mod baselines;
pub mod binfmt;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod index;
pub mod reviews;
pub mod text;
pub mod tinymodel;

pub use error::{Error, Result};
