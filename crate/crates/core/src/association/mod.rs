//! Fusion of gathered plane features into per-point features.

mod attention;
mod gather;
mod point_branch;

pub use attention::{
    cross_attention_backward, cross_attention_forward, positional_embedding, AttentionCache, AttentionConfig,
    AttentionGrads, AttentionInput, AttentionParams,
};
pub use gather::{gather_backward, gather_plane_features, Gathered};
pub use point_branch::{
    point_encoder_backward, point_encoder_forward, Neighborhoods, PointEncoderCache, PointEncoderConfig,
    PointEncoderParams,
};
