//! End-to-end runs: load (or synthesize) a network, detect, optionally
//! apply suggestions, and write a deterministic artifact set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_layers, missing_paths, validate_sources, DatasetError, DatasetManifest, LayerSource};
use crate::geometry::{polygonize_layer, MultiPolygonGeometry};
use crate::ingest::export_layer_string;
use crate::model::{InfrastructureNetwork, LayerKind, ModelError, DEFAULT_EPSILON};
use crate::repair::{
    apply_suggestion, check_valve_degree, detect_dangling_ends, detect_duplicate_nodes, detect_symbol_circles,
    infer_missing_edges, repair_building_boundaries, FlagLedger, FlagStatus, InferenceParams, RepairError, Rule,
    SymbolParams,
};
use crate::synth::{
    corrupt_scene, evaluate_inference, generate_scene, report, run_inference, write_csv, EvaluationReport, GridSpec,
    SceneParams, SynthError,
};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input file(s): {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInput(Vec<PathBuf>),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot write `{}`: {source}", .path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Load and re-emit the layers.
    Convert,
    /// Flag and suggest; change nothing.
    Detect,
    /// Flag, suggest, and apply every suggestion; flags stay open.
    Repair,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Convert => "convert",
            Stage::Detect => "detect",
            Stage::Repair => "repair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub scene: SceneParams,
    pub removal_fraction: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub layers: Vec<LayerSource>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub inference: InferenceParams,
    #[serde(default)]
    pub symbols: SymbolParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            epsilon: DEFAULT_EPSILON,
            inference: InferenceParams::default(),
            symbols: SymbolParams::default(),
            output_dir: None,
            seed: 0,
            synthetic: None,
        }
    }
}

impl PipelineConfig {
    /// Parameter and path checks done before any work starts. `base`
    /// resolves relative layer paths.
    pub fn validate(&self, base: &Path) -> Result<(), PipelineError> {
        if self.layers.is_empty() && self.synthetic.is_none() {
            return Err(PipelineError::Config("no layers and no synthetic scene configured".into()));
        }
        if self.output_dir.is_none() {
            return Err(PipelineError::Config("output_dir is required".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(PipelineError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.inference
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let s = &self.symbols;
        if !(s.max_radius > 0.0 && s.max_radial_deviation >= 0.0 && s.attach_factor > 0.0 && s.min_nodes >= 3) {
            return Err(PipelineError::Config("symbol parameters must be positive (min_nodes >= 3)".into()));
        }
        if let Some(syn) = &self.synthetic {
            if !(syn.removal_fraction > 0.0 && syn.removal_fraction < 1.0) {
                return Err(PipelineError::Config("removal_fraction must lie in (0, 1)".into()));
            }
        }
        validate_sources(&self.layers).map_err(PipelineError::Config)?;
        let missing = missing_paths(base, &self.layers);
        if !missing.is_empty() {
            return Err(PipelineError::MissingInput(missing));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub nodes: usize,
    pub edges: usize,
    pub areas: usize,
}

/// Machine-readable run summary (printed on stdout and written to
/// `summary.json`). Carries no timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub schema_version: u32,
    pub stage: Stage,
    pub seed: u64,
    pub revision: u64,
    pub layers: BTreeMap<String, LayerCounts>,
    /// Flag counts per rule; every rule is listed.
    pub flags: BTreeMap<String, usize>,
    pub open_flags: usize,
    pub suggestions: usize,
    pub applied_suggestions: usize,
    pub skipped_features: usize,
    pub unsupported_features: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluation: Vec<EvaluationReport>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

fn footprints(net: &InfrastructureNetwork) -> Result<MultiPolygonGeometry, RepairError> {
    let mut polygons = Vec::new();
    let buildings: Vec<String> = net.layers_of_kind(LayerKind::Buildings).map(|l| l.id.clone()).collect();
    for layer in &buildings {
        polygons.extend(polygonize_layer(net, layer)?.footprints.polygons);
        for area in net.areas_in_layer(layer) {
            polygons.extend(area.geometry.polygons.iter().cloned());
        }
    }
    Ok(MultiPolygonGeometry::new(polygons))
}

fn apply_new(
    net: &mut InfrastructureNetwork,
    ledger: &mut FlagLedger,
    from: usize,
    stage: Stage,
) -> Result<(), RepairError> {
    if stage != Stage::Repair {
        return Ok(());
    }
    let ids: Vec<String> = ledger.suggestions[from..].iter().map(|s| s.id.clone()).collect();
    for sid in ids {
        apply_suggestion(net, ledger, &sid)?;
    }
    Ok(())
}

/// Run every detection rule in a fixed order; in repair mode each rule's
/// suggestions are applied before the next rule looks at the network.
pub fn detect_and_repair(
    net: &mut InfrastructureNetwork,
    ledger: &mut FlagLedger,
    inference: &InferenceParams,
    symbols: &SymbolParams,
    stage: Stage,
) -> Result<(), RepairError> {
    if stage == Stage::Convert {
        return Ok(());
    }
    let pipes: Vec<String> = net.layers_of_kind(LayerKind::Pipes).map(|l| l.id.clone()).collect();
    let streets = net.layers_of_kind(LayerKind::Streets).map(|l| l.id.clone()).next();
    for layer in &pipes {
        let mark = ledger.suggestions.len();
        detect_duplicate_nodes(net, ledger, layer)?;
        apply_new(net, ledger, mark, stage)?;

        let mark = ledger.suggestions.len();
        detect_symbol_circles(net, ledger, layer, symbols)?;
        apply_new(net, ledger, mark, stage)?;

        check_valve_degree(net, ledger, layer)?;

        let mark = ledger.suggestions.len();
        let fp = footprints(net)?;
        detect_dangling_ends(net, ledger, layer, &fp)?;
        infer_missing_edges(net, ledger, layer, streets.as_deref(), inference)?;
        apply_new(net, ledger, mark, stage)?;
    }
    let buildings: Vec<String> = net.layers_of_kind(LayerKind::Buildings).map(|l| l.id.clone()).collect();
    for layer in &buildings {
        let mark = ledger.suggestions.len();
        repair_building_boundaries(net, ledger, layer)?;
        apply_new(net, ledger, mark, stage)?;
    }
    Ok(())
}

fn write(out: &Path, rel: &str, bytes: &[u8], written: &mut Vec<String>) -> Result<(), PipelineError> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, bytes).map_err(|source| PipelineError::Write { path, source })?;
    written.push(rel.to_string());
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Synthetic evaluation: both constraint settings on the configured scene.
pub fn evaluate_synthetic(
    syn: &SyntheticConfig,
    seed: u64,
    inference: &InferenceParams,
) -> Result<(InfrastructureNetwork, FlagLedger, Vec<EvaluationReport>), PipelineError> {
    let scene = generate_scene(seed, syn.grid, syn.scene)?;
    let corrupted = corrupt_scene(&scene, syn.removal_fraction, seed)?;
    let mut reports = Vec::new();
    let mut kept = None;
    for constraint in [true, false] {
        let (ledger, links) = run_inference(&corrupted, inference, constraint)?;
        let (tp, fp) = evaluate_inference(&corrupted.network, &links, &corrupted.removed, corrupted.network.epsilon());
        reports.push(report(
            seed,
            syn.removal_fraction,
            *inference,
            constraint,
            corrupted.removed.len(),
            tp,
            fp,
        ));
        if constraint {
            kept = Some(ledger);
        }
    }
    Ok((corrupted.network, kept.expect("constraint run"), reports))
}

/// Run a stage over the configured input and write its artifacts:
/// `layers/<id>.geojson`, `ledger.json`, `manifest.json`, `summary.json`,
/// plus `evaluation.json`/`evaluation.csv` for synthetic scenes.
pub fn run_pipeline(config: &PipelineConfig, base: &Path, stage: Stage) -> Result<PipelineSummary, PipelineError> {
    config.validate(base)?;
    let out = config.output_dir.as_ref().expect("validated");
    let out = if out.is_absolute() { out.clone() } else { base.join(out) };

    let (mut net, mut ledger, evaluation, skipped, unsupported) = match &config.synthetic {
        Some(syn) => {
            let (net, ledger, reports) = evaluate_synthetic(syn, config.seed, &config.inference)?;
            (net, ledger, reports, 0, 0)
        }
        None => {
            let (net, report, unsupported) = load_layers(base, config.epsilon, &config.layers)?;
            (net, FlagLedger::new(), Vec::new(), report.skipped.len(), unsupported.len())
        }
    };
    if config.synthetic.is_none() {
        detect_and_repair(&mut net, &mut ledger, &config.inference, &config.symbols, stage)?;
    }

    let mut written = Vec::new();
    let mut sources = Vec::new();
    for layer in net.layers() {
        let rel = format!("layers/{}.geojson", layer.id);
        write(&out, &rel, export_layer_string(&net, &layer.id)?.as_bytes(), &mut written)?;
        sources.push(LayerSource::from_layer(layer, PathBuf::from(&rel)));
    }
    write(&out, "ledger.json", &pretty(&ledger), &mut written)?;
    let manifest = DatasetManifest {
        epsilon: net.epsilon(),
        layers: sources,
        ledger: Some(PathBuf::from("ledger.json")),
        ontologies: None,
    };
    write(&out, "manifest.json", &pretty(&manifest), &mut written)?;
    if !evaluation.is_empty() {
        write(&out, "evaluation.json", &pretty(&evaluation), &mut written)?;
        let mut csv = Vec::new();
        write_csv(&mut csv, &evaluation).map_err(|e| PipelineError::Write {
            path: out.join("evaluation.csv"),
            source: std::io::Error::other(e),
        })?;
        write(&out, "evaluation.csv", &csv, &mut written)?;
    }

    let mut flags: BTreeMap<String, usize> = Rule::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
    for f in &ledger.flags {
        *flags.entry(f.rule.as_str().to_string()).or_default() += 1;
    }
    written.push("summary.json".into());
    written.sort();
    let summary = PipelineSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        stage,
        seed: config.seed,
        revision: net.revision(),
        layers: net
            .layers()
            .map(|l| {
                (
                    l.id.clone(),
                    LayerCounts {
                        nodes: net.nodes_in_layer(&l.id).count(),
                        edges: net.edges_in_layer(&l.id).count(),
                        areas: net.areas_in_layer(&l.id).count(),
                    },
                )
            })
            .collect(),
        flags,
        open_flags: ledger.flags.iter().filter(|f| f.status == FlagStatus::Open).count(),
        suggestions: ledger.suggestions.len(),
        applied_suggestions: ledger.suggestions.iter().filter(|s| s.applied.is_some()).count(),
        skipped_features: skipped,
        unsupported_features: unsupported,
        evaluation,
        artifacts: written,
    };
    let mut unused = Vec::new();
    write(&out, "summary.json", &pretty(&summary), &mut unused)?;
    Ok(summary)
}
