//! Scene-level image generation from freehand sketches.

pub mod background;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod filter;
pub mod imaging;
pub mod latent;
pub mod layers;
pub mod model;
pub mod scene;
pub mod service;

pub use error::{Error, Result};
