//! Dataset manifests: which files make up a network, plus its ledger and
//! ontologies. Paths are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{build_network, export_layer_string, load_tables, parse_layer, BuildReport, IngestError, UnsupportedFeature};
use crate::model::{
    InfrastructureNetwork, Layer, LayerKind, ModelError, Sensitivity, TemporalResolution, TimeInterval, DEFAULT_EPSILON,
};
use crate::ontology::{load_ontology, Catalog, OntologyError, OntologyGraph};
use crate::repair::FlagLedger;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read `{}`: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest `{}`: {message}", .path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("`{}`: {source}", .path.display())]
    Ingest { path: PathBuf, source: IngestError },
    #[error("`{}`: {source}", .path.display())]
    Ontology { path: PathBuf, source: OntologyError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSource {
    pub id: String,
    pub kind: LayerKind,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: Sensitivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub temporal_resolution: TemporalResolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_interval: Option<TimeInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geojson: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_csv: Option<PathBuf>,
}

fn default_sensitivity() -> Sensitivity {
    Sensitivity::Public
}

impl LayerSource {
    pub fn layer(&self) -> Layer {
        let mut layer = Layer::new(&self.id, self.kind, self.sensitivity);
        if let Some(name) = &self.name {
            layer.name = name.clone();
        }
        layer.temporal_resolution = self.temporal_resolution;
        layer.valid_interval = self.valid_interval;
        layer
    }

    pub fn from_layer(layer: &Layer, geojson: PathBuf) -> Self {
        Self {
            id: layer.id.clone(),
            kind: layer.kind,
            sensitivity: layer.sensitivity,
            name: (layer.name != layer.id).then(|| layer.name.clone()),
            temporal_resolution: layer.temporal_resolution,
            valid_interval: layer.valid_interval,
            geojson: Some(geojson),
            nodes_csv: None,
            edges_csv: None,
        }
    }

    /// Every file this layer reads.
    pub fn paths(&self) -> Vec<&Path> {
        [&self.geojson, &self.nodes_csv, &self.edges_csv]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .collect()
    }

    fn check(&self) -> Result<(), String> {
        match (&self.geojson, &self.nodes_csv, &self.edges_csv) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => Ok(()),
            _ => Err(format!(
                "layer `{}` needs either `geojson` or both `nodes_csv` and `edges_csv`",
                self.id
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OntologySources {
    pub spatio_temporal: PathBuf,
    #[serde(default)]
    pub domain: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub layers: Vec<LayerSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontologies: Option<OntologySources>,
}

/// A loaded dataset: network, ledger, and (when configured) the ontology
/// catalog matched against the network.
#[derive(Debug)]
pub struct Dataset {
    pub network: InfrastructureNetwork,
    pub ledger: FlagLedger,
    pub catalog: Option<Catalog>,
    pub report: BuildReport,
    pub unsupported: Vec<(String, UnsupportedFeature)>,
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Build a network from layer sources. GeoJSON layers go through
/// `build_network` together; table layers are loaded per layer and merged.
pub fn load_layers(
    base: &Path,
    epsilon: f64,
    sources: &[LayerSource],
) -> Result<(InfrastructureNetwork, BuildReport, Vec<(String, UnsupportedFeature)>), DatasetError> {
    let mut layers = Vec::new();
    let mut features = Vec::new();
    let mut unsupported = Vec::new();
    let mut tables = Vec::new();
    for src in sources {
        let layer = src.layer();
        if let Some(p) = &src.geojson {
            let path = resolve(base, p);
            let parsed = parse_layer(&read(&path)?, &layer).map_err(|source| DatasetError::Ingest { path, source })?;
            features.extend(parsed.features);
            unsupported.extend(parsed.unsupported.into_iter().map(|u| (layer.id.clone(), u)));
            layers.push(layer);
        } else if let (Some(n), Some(e)) = (&src.nodes_csv, &src.edges_csv) {
            let (np, ep) = (resolve(base, n), resolve(base, e));
            let (nodes, edges) = (read(&np)?, read(&ep)?);
            let fragment = load_tables(nodes.as_slice(), edges.as_slice(), &layer, epsilon)
                .map_err(|source| DatasetError::Ingest { path: np, source })?;
            tables.push(fragment);
        }
    }
    let built = build_network(epsilon, &layers, &features).map_err(|source| DatasetError::Ingest {
        path: base.to_path_buf(),
        source,
    })?;
    let mut network = built.network;
    for fragment in tables {
        network.absorb(fragment)?;
    }
    Ok((network, built.report, unsupported))
}

pub fn load_catalog(
    base: &Path,
    sources: &OntologySources,
    net: &InfrastructureNetwork,
) -> Result<Catalog, DatasetError> {
    let load = |p: &Path| -> Result<OntologyGraph, DatasetError> {
        let path = resolve(base, p);
        load_ontology(&read(&path)?).map_err(|source| DatasetError::Ontology { path, source })
    };
    let st = load(&sources.spatio_temporal)?;
    let domains = sources.domain.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    Catalog::build(st, domains, net).map_err(|source| DatasetError::Ontology {
        path: resolve(base, &sources.spatio_temporal),
        source,
    })
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let bytes = read(path)?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| DatasetError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.validate(path)?;
        Ok(manifest)
    }

    fn validate(&self, path: &Path) -> Result<(), DatasetError> {
        let bad = |message: String| DatasetError::Manifest {
            path: path.to_path_buf(),
            message,
        };
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(bad(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.layers.is_empty() {
            return Err(bad("no layers listed".into()));
        }
        for l in &self.layers {
            l.check().map_err(bad)?;
        }
        Ok(())
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, DatasetError> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (network, report, unsupported) = load_layers(base, manifest.epsilon, &manifest.layers)?;
    let ledger = match &manifest.ledger {
        Some(p) => {
            let path = resolve(base, p);
            serde_json::from_slice(&read(&path)?).map_err(|e| DatasetError::Manifest {
                path,
                message: format!("bad ledger: {e}"),
            })?
        }
        None => FlagLedger::new(),
    };
    let catalog = manifest
        .ontologies
        .as_ref()
        .map(|o| load_catalog(base, o, &network))
        .transpose()?;
    Ok(Dataset {
        network,
        ledger,
        catalog,
        report,
        unsupported,
    })
}

/// Write the network and ledger back to the files a manifest names. The
/// manifest gains a `ledger.json` entry if it had none. Table-backed
/// layers cannot be written back. Returns the files written.
pub fn save_dataset(
    manifest_path: &Path,
    network: &InfrastructureNetwork,
    ledger: &FlagLedger,
) -> Result<Vec<PathBuf>, DatasetError> {
    let mut manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let write = |path: PathBuf, bytes: &[u8]| {
        fs::write(&path, bytes).map_err(|source| DatasetError::Io { path: path.clone(), source })?;
        Ok::<_, DatasetError>(path)
    };
    let mut layers = Vec::new();
    for source in &manifest.layers {
        let path = source.geojson.as_ref().ok_or_else(|| DatasetError::Manifest {
            path: manifest_path.to_path_buf(),
            message: format!("layer `{}` is table-backed and cannot be written back", source.id),
        })?;
        layers.push((resolve(base, path), export_layer_string(network, &source.id)?));
    }
    let mut written = Vec::new();
    for (path, text) in layers {
        written.push(write(path, text.as_bytes())?);
    }
    if manifest.ledger.is_none() {
        manifest.ledger = Some(PathBuf::from("ledger.json"));
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        written.push(write(manifest_path.to_path_buf(), text.as_bytes())?);
    }
    let ledger_path = resolve(base, manifest.ledger.as_ref().expect("set above"));
    let mut text = serde_json::to_string_pretty(ledger).expect("serializable");
    text.push('\n');
    written.push(write(ledger_path, text.as_bytes())?);
    Ok(written)
}

/// Check that every file a layer list refers to exists.
pub fn missing_paths(base: &Path, sources: &[LayerSource]) -> Vec<PathBuf> {
    sources
        .iter()
        .flat_map(|s| s.paths())
        .map(|p| resolve(base, p))
        .filter(|p| !p.exists())
        .collect()
}

pub(crate) fn validate_sources(sources: &[LayerSource]) -> Result<(), String> {
    sources.iter().try_for_each(LayerSource::check)
}
