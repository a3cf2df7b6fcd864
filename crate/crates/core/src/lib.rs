//! Visual word sense disambiguation.
//!
//! Given an ambiguous target word, its context phrase and ten candidate
//! images, the pipeline ranks the images by cosine similarity between an
//! enriched text embedding (dual-channel prompt ensemble, optional synonym
//! prompts and gloss blending) and enriched image embeddings (mean over
//! augmented views). The [`eval`] module scores whole datasets with MRR and
//! hit rate and drives ablations and hyperparameter search.

pub mod augment;
pub mod backend;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod pipeline;
pub mod prompts;
pub mod ranker;
pub mod translate;

pub use backend::{EmbeddingBackend, MockBackend};
pub use dataset::{Sample, SampleSet};
pub use embedding::Embedding;
pub use error::{Result, VwsdError};
