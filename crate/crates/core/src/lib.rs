//! Six-plane ("hexplane") scene understanding for labeled point clouds.
//!
//! The pipeline projects a cloud onto five orthographic planes and a
//! cylindrical range view, encodes each plane with a small strided CNN,
//! gathers plane features back to every point and fuses them with
//! occlusion-aware cross-attention before a segmentation head.

pub mod association;
pub mod checkpoint;
pub mod cloud;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod scenes;
pub mod tensor;

pub use error::{Error, Result};
