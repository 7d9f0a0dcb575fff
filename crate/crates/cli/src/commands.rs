use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Utc};
use guides_core::access::AccessPolicy;
use guides_core::dataset::{load_dataset, save_dataset, DatasetError};
use guides_core::geometry::{BBox, MultiPolygonGeometry, PolygonGeometry, SpatialOp};
use guides_core::ingest::{parse_geometry, FeatureGeometry};
use guides_core::model::{LayerKind, TimeInterval};
use guides_core::ontology::{impact_query, integrated_query, OntologyError, Region, RegionTimeQuery};
use guides_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, Stage, SyntheticConfig, SUMMARY_SCHEMA_VERSION};
use guides_core::repair::{resolve_flag, RepairError};
use guides_core::synth::ReferenceScene;
use guides_service::{ConfigError, ServiceConfig, ServiceError, LISTEN_ENV};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{Command, EvalArgs, Overrides, PipelineArgs, QueryArgs, ResolveArgs, ServeArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            PipelineError::MissingInput(_) | PipelineError::Dataset(_) => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(ConfigError::Io { .. }) | ServiceError::Dataset(_) => CliError::Input(e.to_string()),
            ServiceError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<OntologyError> for CliError {
    fn from(e: OntologyError) -> Self {
        match e {
            OntologyError::InvalidArgument(_) | OntologyError::Geometry(_) => CliError::Usage(e.to_string()),
            OntologyError::NotFound(_) | OntologyError::TypeError { .. } => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<RepairError> for CliError {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::Unauthorized { .. } => CliError::Usage(e.to_string()),
            RepairError::UnknownFlag(_) | RepairError::Conflict(_) => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

pub fn run(command: Command) -> Result<Value, CliError> {
    match command {
        Command::Convert(a) => pipeline(a, Stage::Convert),
        Command::Detect(a) => pipeline(a, Stage::Detect),
        Command::Repair(a) => pipeline(a, Stage::Repair),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::Resolve(a) => resolve(a),
    }
}

/// Parse a config file as TOML when its extension says so, else JSON.
fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read `{}`: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("invalid config `{}`: {e}", path.display())))
}

fn base_of(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    if p.is_absolute() {
        return Ok(p.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::Internal(format!("no working directory: {e}")))?;
    Ok(cwd.join(p))
}

fn apply_overrides(config: &mut PipelineConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(out) = &o.output {
        config.output_dir = Some(absolute(out)?);
    }
    if let Some(e) = o.epsilon {
        config.epsilon = e;
    }
    if let Some(s) = o.seed {
        config.seed = s;
    }
    if let Some(r) = o.radius {
        config.inference.search_radius = r;
    }
    if let Some(w) = o.corridor {
        config.inference.corridor_half_width = w;
    }
    Ok(())
}

fn summary(config: &PipelineConfig, base: &Path, stage: Stage) -> Result<Value, CliError> {
    let s = run_pipeline(config, base, stage)?;
    serde_json::to_value(s).map_err(|e| CliError::Internal(e.to_string()))
}

fn pipeline(args: PipelineArgs, stage: Stage) -> Result<Value, CliError> {
    let mut config: PipelineConfig = read_config(&args.config)?;
    apply_overrides(&mut config, &args.overrides)?;
    summary(&config, &base_of(&args.config), stage)
}

fn eval(args: EvalArgs) -> Result<Value, CliError> {
    let reference = ReferenceScene::default();
    let (mut config, base) = match &args.config {
        Some(path) => (read_config::<PipelineConfig>(path)?, base_of(path)),
        None => (
            PipelineConfig {
                seed: reference.seed,
                inference: reference.inference,
                ..PipelineConfig::default()
            },
            PathBuf::from("."),
        ),
    };
    let syn = config.synthetic.get_or_insert(SyntheticConfig {
        grid: reference.grid,
        scene: reference.params,
        removal_fraction: reference.removal_fraction,
    });
    if let Some(p) = args.removal {
        syn.removal_fraction = p;
    }
    if let Some(r) = args.rows {
        syn.grid.rows = r;
    }
    if let Some(c) = args.cols {
        syn.grid.cols = c;
    }
    if let Some(b) = args.block {
        syn.grid.block = b;
    }
    apply_overrides(&mut config, &args.overrides)?;
    summary(&config, &base, Stage::Detect)
}

fn serve(args: ServeArgs) -> Result<Value, CliError> {
    let mut config = ServiceConfig::load(&args.config).map_err(ServiceError::from)?;
    if let Some(d) = args.dataset {
        config.dataset = absolute(&d)?;
    }
    if let Some(cap) = args.area_cap_km2 {
        config.area_cap_km2 = cap;
    }
    let listen = args.listen.or_else(|| std::env::var(LISTEN_ENV).ok());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    runtime.block_on(guides_service::serve(&config, listen))?;
    Ok(json!({"schema_version": SUMMARY_SCHEMA_VERSION, "stopped": true}))
}

fn parse_date(flag: &str, s: &str) -> Result<NaiveDate, CliError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| CliError::Usage(format!("--{flag} must be YYYY-MM-DD, got `{s}`")))
}

fn polygon_region(path: &Path) -> Result<Region, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read `{}`: {e}", path.display())))?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?;
    let polys = match parse_geometry(&v).map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))? {
        FeatureGeometry::Polygon(rings) => vec![rings],
        FeatureGeometry::MultiPolygon(polys) => polys,
        other => {
            return Err(CliError::Input(format!(
                "`{}`: expected Polygon or MultiPolygon, got {}",
                path.display(),
                other.kind_name()
            )))
        }
    };
    let polygons = polys
        .into_iter()
        .map(|mut rings| {
            let outer = rings.remove(0);
            PolygonGeometry::new(outer, rings)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?;
    Ok(Region::Polygon(MultiPolygonGeometry::new(polygons)))
}

fn query(args: QueryArgs) -> Result<Value, CliError> {
    let region = match (&args.bbox, &args.polygon, &args.region, &args.impact) {
        (Some(b), None, None, None) => match b[..] {
            [x0, y0, x1, y1] => Some(Region::BBox(BBox::new(x0, y0, x1, y1))),
            _ => return Err(CliError::Usage(format!("--bbox takes 4 numbers, got {}", b.len()))),
        },
        (None, Some(p), None, None) => Some(polygon_region(p)?),
        (None, None, Some(name), None) => Some(Region::Named(name.clone())),
        (None, None, None, Some(_)) => None,
        (None, None, None, None) => {
            return Err(CliError::Usage("give one of --bbox, --polygon, --region, or --impact".into()))
        }
        _ => return Err(CliError::Usage("--bbox, --polygon, and --region are mutually exclusive".into())),
    };
    let predicate: SpatialOp = serde_json::from_value(json!(args.predicate))
        .map_err(|_| CliError::Usage(format!("unknown predicate `{}`", args.predicate)))?;
    let layer_kinds: BTreeSet<LayerKind> = if args.kinds.is_empty() {
        LayerKind::ALL.into_iter().collect()
    } else {
        args.kinds
            .iter()
            .map(|k| k.parse::<LayerKind>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let interval = match (&args.from, &args.to) {
        (None, None) => None,
        (Some(f), Some(t)) => Some(
            TimeInterval::new(parse_date("from", f)?, parse_date("to", t)?)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        ),
        _ => return Err(CliError::Usage("--from and --to go together".into())),
    };

    let ds = load_dataset(&args.dataset)?;
    let policy = AccessPolicy::default();
    let Some(region) = region else {
        let edge = args.impact.expect("matched above");
        let census = match &args.census_layer {
            Some(c) => c.clone(),
            None => ds
                .network
                .layers_of_kind(LayerKind::Census)
                .next()
                .map(|l| l.id.clone())
                .ok_or_else(|| CliError::Input("dataset has no census layer".into()))?,
        };
        for layer in [ds.network.edge(&edge).map(|e| e.layer_id.clone()), Some(census.clone())].into_iter().flatten() {
            let l = ds.network.layer(&layer).map_err(|e| CliError::Input(e.to_string()))?;
            if !policy.can_read(args.role, l).is_allowed() {
                return Err(CliError::Usage(format!("role `{}` may not read layer `{layer}`", args.role)));
            }
        }
        let r = impact_query(&ds.network, &census, &edge, &args.attribute)?;
        return Ok(json!({
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "revision": ds.network.revision(),
            "edge": edge,
            "census_layer": census,
            "blocks": r.blocks,
            "sum": r.sum,
        }));
    };
    let q = RegionTimeQuery {
        region,
        interval,
        layer_kinds,
        predicate,
    };
    let result = integrated_query(&q, ds.catalog.as_ref(), &ds.network, &policy, args.role)?;
    let mut out = result.to_geojson(&ds.network)?;
    out["schema_version"] = json!(SUMMARY_SCHEMA_VERSION);
    out["feature_count"] = json!(result.feature_count());
    Ok(out)
}

fn resolve(args: ResolveArgs) -> Result<Value, CliError> {
    let mut ds = load_dataset(&args.dataset)?;
    let policy = AccessPolicy::default();
    let resolved = resolve_flag(
        &mut ds.network,
        &mut ds.ledger,
        &policy,
        &args.flag,
        args.decision,
        args.role,
        Utc::now(),
    )?;
    let written = save_dataset(&args.dataset, &ds.network, &ds.ledger)?;
    Ok(json!({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "revision": ds.network.revision(),
        "decision": args.decision,
        "resolved": resolved,
        "written": written,
    }))
}
