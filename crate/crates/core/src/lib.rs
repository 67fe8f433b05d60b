//! Sparse voxel radiance-field compression: non-uniform downsampling with
//! importance-ranked voxel retention, a learned residual refinement network,
//! a zlib/float16 container and an accelerated volume renderer.

pub mod codec;
pub mod compress;
pub mod error;
pub mod grid;
pub mod ncb;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
