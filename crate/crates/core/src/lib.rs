//! Entity typing over a unified hierarchical label space.
//!
//! The crate merges the label sets of several entity-typing datasets into
//! one tree, trains a single classifier over the pooled data with a partial,
//! hierarchy-aware loss, and compares it with per-dataset ensembles.

pub mod taxonomy;
pub mod ingestion;
pub mod encoder;
pub mod predictor;
pub mod ensembles;
pub mod evaluation;
pub mod synthbench;
