//! Bloch-fiber homogenization of periodic operators b(D)* g b(D).

pub mod bloch;
pub mod cli;
pub mod effective;
pub mod error;
pub mod fields;
pub mod gallery;
pub mod germ;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod propagate;

pub use error::{Error, Result};
