//! Billboard replacement engine: localize a billboard from a probability
//! heatmap, track it through a video, and composite a new advert into it
//! with gradient-domain blending.

pub mod compositor;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod imagecore;
pub mod maskops;
pub mod pipeline;
pub mod tracker;
pub mod videoio;

pub use error::{Error, Result};
pub use geometry::{Homography, Point, Quad};
pub use imagecore::{Frame, GrayImage, Pyramid};
