use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cdindex::batch::OutputFormat;
use cdindex::io::DanglingPolicy;
use cdindex::CiterWindow;

#[derive(Debug, Parser)]
#[command(
    name = "cdindex",
    version,
    about = "Disruptiveness and radicalness of nodes in citation networks",
    after_help = "Exit status: 0 success, 1 usage error, 2 I/O error, 3 data validation error.\n\
                  Set CDINDEX_LOG (error, warn, info, debug, trace) to change the log level."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Node table: id, grant_year, optional application_year and category.
    #[arg(long, global = true, value_name = "FILE")]
    pub nodes: Option<PathBuf>,

    /// Edge table: citing, cited.
    #[arg(long, global = true, value_name = "FILE")]
    pub edges: Option<PathBuf>,

    /// Output file (standard output when omitted; a directory for `generate`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Horizon year; defaults to the latest grant year in the graph.
    #[arg(long = "t", global = true, value_name = "YEAR", allow_negative_numbers = true)]
    pub horizon: Option<i32>,

    /// Citer window: `post` admits citers granted no earlier than the focal
    /// node, `all` admits every citer up to the horizon.
    #[arg(long, global = true, default_value = "post", value_name = "post|all")]
    pub window: CiterWindow,

    /// Citer weights for radicalness: uniform, uniform:VALUE, age-decay, or
    /// table:FILE (columns id, weight).
    #[arg(long, global = true, default_value = "uniform", value_name = "SCHEME")]
    pub weights: String,

    /// Half-life in years for `--weights age-decay`.
    #[arg(long, global = true, default_value_t = 10.0, value_name = "YEARS")]
    pub half_life: f64,

    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    pub workers: usize,

    /// Seed for every random step (matching, bootstrap, generators).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub seed: u64,

    #[arg(long, global = true, default_value = "csv", value_name = "csv|jsonl")]
    pub format: OutputFormat,

    /// Input field delimiter; sniffed from the header line when omitted.
    #[arg(long, global = true, value_name = "CHAR")]
    pub delimiter: Option<String>,

    /// Edges whose endpoints are missing from the node table.
    #[arg(long, global = true, default_value = "drop", value_name = "reject|drop|keep-as-stub")]
    pub dangling: DanglingPolicy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Disruptiveness and radicalness for one node, a focal set, or a batch.
    Compute(ComputeArgs),
    /// Year-by-year disruptiveness trajectories.
    Timeseries(TimeseriesArgs),
    /// Select high-disruptiveness focal nodes and match their prior-art pairs
    /// to control pairs by coarsened exact matching.
    Match(MatchArgs),
    /// Event-time citation panel and difference-in-differences estimate.
    Did(DidArgs),
    /// Descriptive statistics and correlations over a result table.
    Stats(StatsArgs),
    /// Write synthetic inputs.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Selection {
    /// Focal node ids, each measured on its own.
    #[arg(long, value_delimiter = ',', value_name = "ID,...")]
    pub focal: Vec<String>,

    /// Ids measured jointly as one focal set.
    #[arg(long, value_delimiter = ',', value_name = "ID,...")]
    pub focal_set: Vec<String>,

    /// Every node in the graph.
    #[arg(long)]
    pub all: bool,

    /// Nodes granted in FROM:TO.
    #[arg(long, value_parser = parse_range, value_name = "FROM:TO", allow_hyphen_values = true)]
    pub year_range: Option<(i32, i32)>,

    /// The K most cited nodes.
    #[arg(long, value_name = "K")]
    pub top_cited: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IncidenceArg {
    Auto,
    Indicator,
    Fractional,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub selection: Selection,

    /// Let members of a focal set count as citers of each other.
    #[arg(long)]
    pub include_focal_citers: bool,

    /// Per-citer incidence form; `auto` uses indicators for single nodes and
    /// fractions for focal sets.
    #[arg(long, value_enum, default_value_t = IncidenceArg::Auto)]
    pub incidence: IncidenceArg,
}

#[derive(Debug, Clone, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TimeseriesArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,

    /// First year; defaults to the earliest grant year in the graph.
    #[arg(long, value_name = "YEAR")]
    pub from: Option<i32>,

    /// Last year; defaults to the horizon.
    #[arg(long, value_name = "YEAR")]
    pub to: Option<i32>,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Output of `compute` (CSV or JSON lines).
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,

    /// Treated nodes score this many SDs above the mean.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true, value_name = "SD")]
    pub threshold_sd: f64,

    /// Use every score for the mean and SD instead of positive scores only.
    #[arg(long)]
    pub include_nonpositive: bool,

    /// Drop pairs whose prior art was granted before this year.
    #[arg(long, value_name = "YEAR")]
    pub min_prior_art_year: Option<i32>,

    /// Draw controls with replacement.
    #[arg(long)]
    pub with_replacement: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DidArgs {
    /// Matched-pairs file from `match`; the panel is built from the graph.
    #[arg(long, value_name = "FILE", required_unless_present = "panel", conflicts_with = "panel")]
    pub matched: Option<PathBuf>,

    /// Prebuilt panel: pair_id, group, event_year, citations.
    #[arg(long, value_name = "FILE")]
    pub panel: Option<PathBuf>,

    /// Event years kept when building the panel.
    #[arg(long, default_value = "-5:5", value_parser = parse_range, value_name = "FROM:TO", allow_hyphen_values = true)]
    pub panel_window: (i32, i32),

    #[arg(long, default_value = "-5:-1", value_parser = parse_range, value_name = "FROM:TO", allow_hyphen_values = true)]
    pub pre: (i32, i32),

    #[arg(long, default_value = "1:5", value_parser = parse_range, value_name = "FROM:TO", allow_hyphen_values = true)]
    pub post: (i32, i32),

    /// Bootstrap replications; 0 gives the point estimate only.
    #[arg(long, default_value_t = 500, value_name = "N")]
    pub reps: usize,

    /// Also write the built panel here.
    #[arg(long, value_name = "FILE")]
    pub panel_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Result table (CSV or JSON lines).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Variables to summarize; defaults to the numeric result columns.
    #[arg(long, value_delimiter = ',', value_name = "VAR,...")]
    pub vars: Vec<String>,

    /// Report per-year quantiles of `--value` grouped by this column.
    #[arg(long, value_name = "VAR")]
    pub by_year: Option<String>,

    #[arg(long, default_value = "disruptiveness", value_name = "VAR")]
    pub value: String,

    #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.5,0.75,0.95", value_name = "P,...")]
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    /// Random citation graph with edges pointing to earlier nodes.
    Random,
    /// Neighborhoods of the eighteen illustrative patents.
    Illustrative,
    /// Citation history of the cotransformation patent.
    Axel,
    /// Poisson event panel with an injected treated-post effect.
    Panel,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: GenerateKind,

    #[arg(long, default_value_t = 10_000)]
    pub n_nodes: usize,

    #[arg(long, default_value_t = 100_000)]
    pub n_edges: usize,

    #[arg(long, default_value = "1976:2010", value_parser = parse_range, value_name = "FROM:TO")]
    pub years: (i32, i32),

    /// Number of node categories assigned round-robin in random graphs.
    #[arg(long, default_value_t = 4)]
    pub categories: usize,

    #[arg(long, default_value_t = 1000)]
    pub clusters: usize,

    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub effect: f64,

    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    pub common_trend: f64,
}

/// Parses `FROM:TO` (a single year `Y` means `Y:Y`).
pub fn parse_range(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (a, b),
        None => (s, s),
    };
    let a: i32 = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if a > b {
        return Err(format!("range `{s}` is empty"));
    }
    Ok((a, b))
}
