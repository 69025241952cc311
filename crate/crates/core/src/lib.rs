//! Ranking the facet-value pairs implied by a keyword query.
//!
//! The pipeline indexes a corpus of structured documents, pools candidate
//! facet-value pairs per query, extracts a feature vector for each
//! (query, pair) instance, and ranks instances with gradient boosted trees
//! trained on binary relevance. [`eval`] scores rankings and runs the
//! by-query cross-validation protocol.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod facets;
pub mod features;
pub mod gbt;
pub mod pipeline;
pub mod retrieval;
pub mod stats;
pub mod synth;
pub mod tsv;

pub use error::{Error, Result};
