//! `guides`: convert, detect, repair, evaluate, serve, query, resolve.
//!
//! Exit codes: 0 success, 1 usage, 2 input error, 3 internal error.
//! Successful runs print one JSON document on stdout.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use guides_core::access::Role;
use guides_core::repair::Verdict;

#[derive(Debug, Parser)]
#[command(name = "guides", version, about = "Urban infrastructure network ingest, repair, and query")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the layers and write them back as GeoJSON with a manifest.
    Convert(PipelineArgs),
    /// Flag errors and record suggestions without changing the data.
    Detect(PipelineArgs),
    /// Flag, suggest, and apply every suggestion; flags stay open.
    Repair(PipelineArgs),
    /// Synthetic inference experiment, with and without the street corridor.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Region/time or impact query against a dataset.
    Query(QueryArgs),
    /// Accept or reject one flag and write the dataset back.
    Resolve(ResolveArgs),
}

/// Overrides shared by the pipeline stages; flags win over the config file.
#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Output directory (relative to the working directory).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inference search radius R in meters.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Street corridor half-width W in meters.
    #[arg(long)]
    pub corridor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline config (JSON, or TOML with a `.toml` extension).
    #[arg(long, short)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pipeline config with a `synthetic` section; defaults to the reference scene.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Fraction of pipe edges removed.
    #[arg(long)]
    pub removal: Option<f64>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Block edge length in meters.
    #[arg(long)]
    pub block: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (JSON or TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Listen address; beats the GUIDES_LISTEN environment variable, which
    /// beats the config file.
    #[arg(long)]
    pub listen: Option<String>,
    /// Dataset manifest, replacing the configured one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub area_cap_km2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Dataset manifest.
    #[arg(long, short)]
    pub dataset: PathBuf,
    /// `min_x,min_y,max_x,max_y`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bbox: Option<Vec<f64>>,
    /// File holding a GeoJSON Polygon or MultiPolygon geometry.
    #[arg(long)]
    pub polygon: Option<PathBuf>,
    /// Named spatial instance of the dataset's ontology.
    #[arg(long)]
    pub region: Option<String>,
    /// Comma-separated layer kinds; default all.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
    /// within, crosses, or intersects.
    #[arg(long, default_value = "intersects")]
    pub predicate: String,
    /// Interval start, YYYY-MM-DD.
    #[arg(long)]
    pub from: Option<String>,
    /// Interval end, YYYY-MM-DD.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long, default_value = "admin")]
    pub role: Role,
    /// Impact query for this pipe edge instead of a region query.
    #[arg(long, conflicts_with_all = ["bbox", "polygon", "region"])]
    pub impact: Option<String>,
    #[arg(long, default_value = "low_income")]
    pub attribute: String,
    #[arg(long)]
    pub census_layer: Option<String>,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Dataset manifest (typically a pipeline output directory's).
    #[arg(long, short)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub flag: String,
    /// accepted or rejected.
    #[arg(long, value_parser = parse_verdict)]
    pub decision: Verdict,
    #[arg(long, default_value = "crew")]
    pub role: Role,
}

fn parse_verdict(s: &str) -> Result<Verdict, String> {
    match s {
        "accepted" | "accept" => Ok(Verdict::Accepted),
        "rejected" | "reject" => Ok(Verdict::Rejected),
        _ => Err(format!("expected `accepted` or `rejected`, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out).expect("serializable");
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
