//! Scene catalogs, tokenization, the synthetic multi-scene benchmark, real
//! benchmark pose files and image augmentation.

pub mod augment;
mod catalog;
pub mod disk;
pub mod ingest;
pub mod synthetic;
mod vocab;

use thiserror::Error;

use crate::geometry::Pose;
use crate::numerics::Tensor;

pub use augment::{color_jitter, crop, CropMode, JitterFactors};
pub use catalog::{Scene, SceneCatalog};
pub use disk::{dataset_digest, read_dataset, write_dataset, Dataset, DatasetInfo};
pub use ingest::{format_7scenes_pose, parse_7scenes_pose, parse_cambridge_index, CambridgeConvention};
pub use synthetic::{generate_synthetic, SynthConfig};
pub use vocab::{normalize_text, Vocab, PAD_ID, UNK_ID};

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSample {
    /// `C×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    pub tokens: Vec<usize>,
    pub scene: usize,
    pub pose: Pose,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("catalog has no scenes")]
    EmptyCatalog,
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("{0}")]
    Invalid(String),
    #[error("pose file: {0}")]
    Parse(String),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("image: {0}")]
    Image(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: {reason}")]
    Manifest { path: String, reason: String },
}
