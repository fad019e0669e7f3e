//! Debiased contrastive learning over precomputed sentence embeddings.
//!
//! A small projection head is trained on frozen embeddings with dropout
//! views as positives, in-batch and Gaussian noise-based negatives, and a
//! similarity gate that drops likely false negatives.

pub mod adam;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod head;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod noise;
pub mod rng;
pub mod similarity;
pub mod synth;
pub mod trainer;
pub mod weighting;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use head::{Activation, HeadParams};
pub use io::{Checkpoint, EmbeddingFormat, EmbeddingMatrix, FormatError, PairDataset};
pub use loss::{Denominator, NegativeViews};
pub use matrix::Matrix;
pub use noise::{NoiseBank, NoiseConfig};
pub use trainer::{run_training, train_step, Trainer};
pub use weighting::{ComplementaryScorer, WeightMask, WeightingMode};
