//! Multi-view 3D part segmentation.
//!
//! A colored point cloud is rendered from a ring of cameras, each view is sent
//! to an instruction-driven 2D segmenter, and the returned masks are lifted
//! back to per-point part labels by superpoint voting.

pub mod geometry;
pub mod gateway;
pub mod mask;
pub mod render;
pub mod superpoints;
pub mod dataset;
pub mod fusion;
pub mod synth;
pub mod pipeline;
