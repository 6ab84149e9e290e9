use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "hodgeflow",
    version,
    about = "Hodge decomposition, flow diagnostics and clustering for traffic flow tables"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Serialized as-is into every output as the run configuration.
#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Potential, divergence and gradient/curl/harmonic parts per slice
    Decompose(DecomposeArgs),
    /// Potential vs divergence variances, assortativity and rank correlation per slice
    Metrics(MetricsArgs),
    /// Spectral and flow-aware clustering per slice
    Cluster(ClusterArgs),
    /// Write synthetic fixtures
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSchema {
    /// src,dst,volume[,timestamp]
    Od,
    /// src,dst,fwd,rev[,timestamp]
    Bidirectional,
    /// segment table plus --detectors
    Segments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdOrder {
    Lexicographic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Dense,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Geojson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cut {
    Ratio,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SynthKind {
    /// Dense origin-destination graph with hubs, od schema
    ErOd,
    /// Lattice road network as detector and segment tables
    Grid,
    /// Lattice with planted flow communities, bidirectional schema plus labels
    Communities,
}

#[derive(Args, Serialize)]
pub struct InputArgs {
    /// Flow table, or the segment table with --schema segments
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputSchema::Od)]
    pub schema: InputSchema,
    /// Detector table, required with --schema segments
    #[arg(long)]
    pub detectors: Option<PathBuf>,
    /// Radius in meters within which detectors merge into one intersection
    #[arg(long, default_value_t = 30.0)]
    pub radius: f64,
    /// How external node ids are ordered
    #[arg(long, value_enum, default_value_t = IdOrder::Lexicographic)]
    pub ids: IdOrder,
    /// Only timestamps in FROM..TO (HH:MM, inclusive); untimed data always passes
    #[arg(long, value_name = "FROM..TO")]
    pub slices: Option<String>,
}

#[derive(Args, Serialize)]
pub struct RunArgs {
    /// Output directory, created if missing
    #[arg(long)]
    pub output: PathBuf,
    /// Slices processed concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = Solver::Cg)]
    pub solver: Solver,
    /// Relative residual target for conjugate gradient
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Args, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Serialize)]
pub struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Cluster counts, comma separated
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub k: Vec<usize>,
    /// Feature sets, comma separated; `spectral` clusters the volume kernel graph
    #[arg(long, value_delimiter = ',', default_value = "struct_only,struct_mean_skew")]
    pub features: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference labels (node_id,label) for the ARI column
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Volume kernel bandwidth for `spectral`; median mean volume by default
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Weight of the volume kernel when blending with distance for `spectral`
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = Cut::Ratio)]
    pub cut: Cut,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Output directory, created if missing
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Node count for er_od
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Edge probability for er_od
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0.05)]
    pub hub_fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub cols: usize,
    /// Block length in meters
    #[arg(long, default_value_t = 100.0)]
    pub spacing: f64,
    /// Energy share of non-gradient noise in the grid flows
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    /// Number of stripe communities
    #[arg(long, default_value_t = 2)]
    pub communities: usize,
    /// Directional imbalance planted in each community
    #[arg(long, default_value_t = 10.0)]
    pub skew_delta: f64,
}
