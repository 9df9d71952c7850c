//! The pose-regression network.
//!
//! Pipeline for one sample:
//!
//! 1. `encode_image`: strided patch embedding plus `γ·P_vis`, `γ = W^(-1/2)`.
//! 2. `encode_text`: token embedding plus `γ·P_txt` over the caption's own length.
//! 3. `fuse`: visual tokens attend to the language tokens through their dot
//!    products; the weighted language context is added to each visual token and
//!    the language tokens are appended, giving one joint sequence.
//! 4. `N` pre-LN decoder layers, each a single-head self-attention block
//!    followed by a multi-head attention block, both over the joint sequence.
//! 5. A final pre-LN GELU feedforward block.
//! 6. Mean pooling over the visual rows feeds the scene classifier and the `K`
//!    pose heads. Training routes through the ground-truth head, evaluation
//!    through the most probable scene.
//!
//! Positional tables are fixed sinusoids (separable 2-D for the patch grid,
//! 1-D for text) and are rebuilt from the config rather than stored.

pub mod checkpoint;
mod config;
mod network;
mod params;

use thiserror::Error;

pub use config::{ModelConfig, ALLOWED_LAYERS};
pub use network::{
    argmax, im2col, ForwardOutput, LayerAttention, Mode, Model, ModelInput, RawPose, SampleGraph, Session,
};
pub use params::{
    init_params, sinusoid_1d, sinusoid_2d, AttentionIds, LayerIds, Layout, ParamStore, PoseHeadIds, ALPHA_INIT,
    BETA_INIT, POSE_BIAS_INIT,
};

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("token id {id} outside vocabulary of {vocab}")]
    OutOfVocab { id: usize, vocab: usize },
    #[error("caption of {len} tokens, allowed 1..={max}")]
    CaptionLength { len: usize, max: usize },
    #[error("scene index {index} out of range for {scenes} scenes")]
    SceneIndex { index: usize, scenes: usize },
    #[error("training mode needs the ground-truth scene of every sample")]
    MissingScene,
    #[error("empty batch")]
    EmptyBatch,
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<ModelError> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[cfg(test)]
mod tests;
