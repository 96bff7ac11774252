//! Word-embedding training engine for the CBOW and skip-gram architectures.
//!
//! Every output objective (full softmax, hierarchical softmax over a Huffman
//! tree, and negative sampling) is implemented with explicit forward passes,
//! losses and gradients so that each update can be checked against finite
//! differences (see [`verify`]).

pub mod embeddings;
pub mod error;
pub mod huffman;
pub mod matrix;
pub mod model;
pub mod noise;
pub mod pca;
pub mod presets;
pub mod trainer;
pub mod verify;
pub mod vocab;

pub use error::{Error, Result};
pub use huffman::{HuffmanTree, PathSpec};
pub use matrix::Matrix;
pub use model::{
    Architecture, Gradient, Model, ModelConfig, ModelState, Objective, OutputLayer, StepReport,
};
pub use noise::{NoiseDistribution, Rng};
pub use trainer::{Schedule, StepSummary, TrainPlan, TrainReport, Trainer};
pub use vocab::{Corpus, Instance, Vocabulary};
