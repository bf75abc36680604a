//! Discourse dynamics engine.
//!
//! Measures how individual forum posts shape a community's conversation over
//! time. Post bodies are embedded, turned into softmax distributions, and
//! compared against sliding windows of neighbouring posts to obtain novelty,
//! transience and resonance. Each community is also projected to 2-D with
//! t-SNE and clustered with DBSCAN; the results are exported as one JSON
//! artifact per community and served to a dashboard over HTTP.

pub mod artifact;
pub mod clustering;
pub mod corpus;
pub mod dynamics;
pub mod embedding;
pub mod hashing;
pub mod manifold;
pub mod pipeline;
pub mod server;
