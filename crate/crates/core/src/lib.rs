//! Streaming weak-form sparse identification of reduced dynamics.

pub mod archive;
pub mod bases;
pub mod codec;
pub mod config;
pub mod datagen;
pub mod error;
pub mod ode;
pub mod pipeline;
pub mod pod;
pub mod quadrature;
pub mod reconstruct;
pub mod regression;
pub mod wsindy;

pub use error::{Error, Result};
