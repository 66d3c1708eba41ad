pub mod config;
pub mod cvector;
pub mod detector;
pub mod divergence;
pub mod error;
pub mod gmm;
pub mod heatmap;
pub mod spam;
pub mod weather;

pub use error::{Error, Result};
