//! Self-supervised job-title relatedness.
//!
//! The crate turns a corpus of job postings and a skill taxonomy into:
//!
//! * a self-supervised pair dataset of job titles scored by the cosine
//!   similarity of their summarized descriptions ([`pairs`]),
//! * a pruned job–skill knowledge graph with per-skill specificity ([`kg`]),
//! * relational graph-convolution node embeddings trained by link
//!   prediction ([`graphembed`]),
//! * a feed-forward alignment map from text embeddings into the graph
//!   embedding space ([`align`]),
//! * region-stratified evaluation ([`evalstats`]) and explanation subgraphs
//!   for any pair of jobs ([`explain`]).
//!
//! [`pipeline`] chains the stages with a content-hashed manifest.

pub mod align;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod evalstats;
pub mod explain;
pub mod graphembed;
pub mod hash;
pub mod kg;
pub mod pairs;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
