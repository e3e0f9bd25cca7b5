//! Curved-Ewald forward model and moment-based structure recovery.

pub mod geometry;
pub mod moments;
pub mod multi_index;
pub mod optics;
pub mod phantom;
pub mod real;
pub mod series;
pub mod momentfit;
pub mod recovery;
pub mod dataset;
pub mod studies;
