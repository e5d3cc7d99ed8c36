//! Learning a connectional brain template from a population of multi-view
//! brain networks.
//!
//! Each subject is a stack of weighted, undirected connectivity matrices
//! over the same nodes (one matrix per view). A graph convolutional model
//! whose message weights are generated from the multi-view edge attributes
//! embeds the nodes, the pairwise L1 distances between embeddings form a
//! template, and training minimizes the Frobenius distance between that
//! template and randomly sampled training subjects, each view weighted
//! inversely to its scale. The per-subject templates are then collapsed
//! into one population template by an element-wise median.
//!
//! The pipeline is deterministic: every random choice flows from an
//! explicit seed, and repeated runs produce bit-identical templates,
//! reports and files.
//!
//! Entry points:
//! - [`data::synthetic::generate_synthetic`] makes seeded test populations,
//!   [`data::io::load_population`] reads real ones from disk.
//! - [`train::train`] fits the model on one fold.
//! - [`eval::refine_cbt`] turns a trained model into a single template.
//! - [`eval::cross_validate`] scores the model against naive baselines.
//! - [`eval::discriminative_rois`] ranks nodes by how strongly two group
//!   templates disagree.
//!
//! The `examples/` directory walks through each stage.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use data::{Population, SubjectTensor};
pub use error::{Error, Result};
pub use model::{CbtMatrix, DgnModel, ModelConfig};
pub use tensor::Tensor;
pub use train::{train, SnlConfig, TrainOutcome};
