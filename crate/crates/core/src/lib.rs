//! Aerial triage core: damage-status vocabulary, track ingest, clip
//! windowing, dataset construction, classification and evaluation.

pub mod classifier;
pub mod dataset;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod windower;
