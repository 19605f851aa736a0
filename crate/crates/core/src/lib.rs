//! Franklin system and shifted Haar analysis on the torus.

pub mod error;
pub mod mesh;
pub mod pwl;
pub mod franklin;
pub mod haar;
pub mod maximal;
pub mod lab;
pub mod cli;

pub use error::{Error, Result};
