pub mod bundle;
pub mod catalog;
pub mod error;
pub mod expr;
pub mod fd;
pub mod frenet;
pub mod geometry;
pub mod integrate;
pub mod verify;

pub use error::{Error, Result};
