//! Generation-augmented retrieval for ad-hoc video search.
//!
//! A textual topic is rewritten into text, image and caption variants, each
//! variant is searched against an exact embedding index of video shots, and
//! the per-variant rank lists are fused with equal weights. Runs are scored
//! with inferred average precision over stratified sampled judgments.

pub mod embedding_index;
pub mod evaluation;
pub mod fixtures;
pub mod fusion;
pub mod generation;
pub mod hash;
pub mod pipeline;
pub mod run;
pub mod synthetic;
pub mod trec_io;

pub use embedding_index::{normalize, EmbeddingStore, EmbeddingVector, IndexError, SearchHit};
pub use fusion::{fuse, fuse_runs, normalize_scores, rank_overlap, FusionError, FusionSpec, Normalization, Overlap};
pub use generation::{
    generate_variants, token_hash_embed, Channel, ConceptBank, GeneratedImage, GenerationError, GeneratorConfig,
    Generators, QueryVariantSet, Topic,
};
pub use run::{RankedDoc, Run, ScoredList};
pub use trec_io::{parse_qrels, parse_topics, read_run, write_run, StratifiedQrels, TrecError};
