//! Hybrid text-to-video retrieval over audiovisual archive clips.
//!
//! Queries are classified as visual descriptions or speech/quotes; speech
//! queries go to a BM25 index over transcripts, visual ones to an exact
//! nearest-neighbour scan over clip embeddings.

pub mod classifier;
pub mod corpus;
pub mod datafication;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod fulltext;
pub mod jsonl;
pub mod rng;
pub mod text;
pub mod vector;
