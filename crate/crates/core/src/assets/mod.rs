//! Animated assets, swept traces and procedural generators.

mod clip;
pub mod format;
mod gen;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use clip::{
    swept_trace, trace_frames, AnimatedAsset, AnimationClip, AssetKind, ClipFrames, Playback, SweptTrace,
};
pub use format::{read_clip, write_clip};
pub use gen::{capsule, gen_flyer, gen_walker, FlyerParams, FlyerShape, PathShape, WalkerParams};

/// Trace sampling stride used for 30 fps clips unless configured otherwise.
pub const DEFAULT_TRACE_STRIDE: usize = 4;

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("clip container at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
