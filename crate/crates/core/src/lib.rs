//! Coherent joint embedding of two feature modalities.
//!
//! Learns a shared unit-norm embedding space for paired feature vectors with
//! a multi-level (ladder) ranking loss driven by continuous relevance
//! degrees, and evaluates retrieval with Recall@K, mean rank and a
//! Kendall-tau coherence score over the retrieved order.

pub mod cli;
pub mod data;
pub mod loss;
pub mod mat;
pub mod metrics;
pub mod relevance;
pub mod trainer;

pub use data::{generate_synthetic, load_dataset, save_dataset, FeatureDataset, SyntheticSpec};
pub use loss::{EmbeddingSpace, LadderConfig, SamplingMode};
pub use metrics::{coherent_score, evaluate, kendall_tau, EvalReport};
pub use relevance::{bin_candidates, build_relevance_matrix, RelevanceMatrix};
pub use trainer::{finite_difference_audit, train, Checkpoint, LossFamily, TrainConfig};
