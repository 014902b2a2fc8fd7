//! Palette and histogram color conditioning toolkit.
//!
//! Builds the HSV conditioning histograms and scalar features consumed by a
//! palette-conditioned image generator, and evaluates generated images
//! against their palettes with an exact earth mover's distance over a
//! clipped CIEDE2000 ground cost.

pub mod colorspace;
pub mod conditioning;
pub mod curation;
pub mod error;
pub mod eval;
pub mod histogram;
pub mod imageio;
pub mod numeric;
pub mod palette;
pub mod transport;

pub use colorspace::{ColorHsv, ColorLab, ColorRgb, DistanceParams};
pub use error::{Error, Result};
pub use histogram::{Dims, HsvHistogram};
pub use palette::Palette;

/// Toolkit version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
