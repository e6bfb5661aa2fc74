//! File formats: PLY point clouds and 16-bit PGM rasters.

pub mod pgm;
pub mod ply;
