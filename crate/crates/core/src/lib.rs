//! Two-stage core-citation prediction.
//!
//! Stage one prunes a large candidate set with exact inner-product retrieval
//! over paper embeddings; stage two reranks the uncertain tail of the
//! retrieval set with an analyzer/decider pair of LLM agents. The crate also
//! provides the graph-derived ground truth and the evaluation harness.

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod pipeline;
pub mod rerank;
pub mod scalar;
pub mod seed;
pub mod toy;

pub use scalar::Scalar;

/// Vector store at the on-disk precision.
pub type VectorStoreF32 = embed::VectorStore<f32>;
pub type EmbeddingF32 = embed::Embedding<f32>;
pub type RetrievalResultF32 = embed::RetrievalResult<f32>;
pub type ScoredF32 = embed::Scored<f32>;
/// Metric gains at report precision.
pub type GainsF64 = eval::Gains<f64>;
