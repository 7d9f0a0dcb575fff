//! Core library: layered infrastructure networks, geometry, repair,
//! synthetic evaluation, and ontology-backed queries.

pub mod geometry;
pub mod model;
pub mod ingest;
pub mod access;
pub mod repair;
pub mod synth;
pub mod ontology;
pub mod dataset;
pub mod pipeline;
