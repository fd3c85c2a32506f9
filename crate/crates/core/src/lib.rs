pub mod cache;
pub mod error;
pub mod harness;
pub mod model;
pub mod noise;
pub mod quadrature;
pub mod resolvent;
pub mod solvers;
pub mod special_functions;

pub use error::{Error, Result};
