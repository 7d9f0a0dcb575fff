//! GeoJSON and CSV ingest, network assembly with edge splitting, and
//! GeoJSON export.

mod build;
mod geojson;
mod tables;

use thiserror::Error;

use crate::model::ModelError;

pub use build::{build_network, BuildReport, BuiltNetwork, SkippedFeature};
pub use geojson::{
    export_features, export_layer, export_layer_string, parse_geometry, parse_layer, FeatureGeometry, FeatureRecord, ParsedLayer,
    UnsupportedFeature, KEY_FLAGS, KEY_NODE_A, KEY_NODE_B, KEY_VALID_FROM, KEY_VALID_TO,
};
pub use tables::load_tables;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("document is not a FeatureCollection")]
    NotFeatureCollection,
    #[error("feature #{index}: {message}")]
    Validation { index: usize, message: String },
    #[error("declared CRS `{0}` is geographic; a projected CRS in meters is required")]
    GeographicCrs(String),
    #[error("feature #{index} belongs to unknown layer `{layer}`")]
    UnknownLayer { index: usize, layer: String },
    #[error("{table} table is missing required column `{column}`")]
    MissingColumn { table: &'static str, column: &'static str },
    #[error("{table} table has duplicate ids: {}", .ids.join(", "))]
    DuplicateIds { table: &'static str, ids: Vec<String> },
    #[error("edges reference absent nodes: {}", .ids.join(", "))]
    DanglingReferences { ids: Vec<String> },
    #[error("{table} table row {row}: {message}")]
    BadRow {
        table: &'static str,
        row: usize,
        message: String,
    },
    #[error("{table} table: {source}")]
    Csv {
        table: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}
