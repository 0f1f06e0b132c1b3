//! Multiple imputation of missing household and individual categorical data
//! under the truncated nested latent class model, with structural-zero
//! rejection sampling.

pub mod error;
pub mod gibbs;
pub mod impute;
pub mod mi;
pub mod model;
pub mod rng;
pub mod rules;
pub mod schema;
pub mod simtools;

pub use error::{Error, Result};
