//! Parallel all-nodes (or subset) measurement with deterministic output.
//!
//! Work is split per focal node and evaluated on a dedicated rayon pool.
//! Rows are computed shard by shard and written in ascending focal-id order,
//! so the bytes written never depend on the worker count.

use std::io::Write;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CitationGraph, NodeIdx};
use crate::measure::{
    disruptiveness_timeseries, evaluate, CiterWindow, ContextBuilder, ContextOptions, Incidence,
    MeasureOptions, MeasureResult, WeightScheme,
};
use crate::stats::RunningMoments;

pub const DEFAULT_SHARD_SIZE: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FocalSelection {
    All,
    Ids(Vec<String>),
    YearRange { from: i32, to: i32 },
    TopCited(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchJob {
    pub selection: FocalSelection,
    /// Defaults to the latest grant year in the graph.
    pub horizon: Option<i32>,
    pub window: CiterWindow,
    pub include_focal_citers: bool,
    pub incidence: Incidence,
    pub weights: WeightScheme,
    /// Emit one row per year in this range instead of a single row.
    pub timeseries: Option<(i32, i32)>,
    pub workers: usize,
    pub shard_size: usize,
}

impl Default for BatchJob {
    fn default() -> Self {
        BatchJob {
            selection: FocalSelection::All,
            horizon: None,
            window: CiterWindow::default(),
            include_focal_citers: false,
            incidence: Incidence::default(),
            weights: WeightScheme::default(),
            timeseries: None,
            workers: 1,
            shard_size: DEFAULT_SHARD_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json" => Ok(OutputFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub focal_id: String,
    pub t: i32,
    pub n: usize,
    pub f_only: usize,
    pub b_only: usize,
    pub both: usize,
    pub disruptiveness: f64,
    pub radicalness: f64,
    pub is_isolate: bool,
}

impl ResultRow {
    pub fn new(focal_id: &str, r: &MeasureResult) -> Self {
        let mut row = ResultRow {
            focal_id: String::new(),
            t: 0,
            n: 0,
            f_only: 0,
            b_only: 0,
            both: 0,
            disruptiveness: 0.0,
            radicalness: 0.0,
            is_isolate: false,
        };
        row.fill(focal_id, r);
        row
    }

    fn fill(&mut self, focal_id: &str, r: &MeasureResult) {
        self.focal_id.clear();
        self.focal_id.push_str(focal_id);
        self.t = r.horizon_year;
        self.n = r.n_citers;
        self.f_only = r.count_focal_only;
        self.b_only = r.count_prior_only;
        self.both = r.count_both;
        self.disruptiveness = r.disruptiveness;
        self.radicalness = r.radicalness;
        self.is_isolate = r.is_isolate;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub focal_id: String,
    pub year: i32,
    pub t: i32,
    pub n: usize,
    pub f_only: usize,
    pub b_only: usize,
    pub both: usize,
    pub disruptiveness: f64,
    pub radicalness: f64,
    pub is_isolate: bool,
}

impl TimeseriesRow {
    pub fn new(focal_id: &str, year: i32, r: &MeasureResult) -> Self {
        let row = ResultRow::new(focal_id, r);
        TimeseriesRow {
            focal_id: row.focal_id,
            year,
            t: row.t,
            n: row.n,
            f_only: row.f_only,
            b_only: row.b_only,
            both: row.both,
            disruptiveness: row.disruptiveness,
            radicalness: row.radicalness,
            is_isolate: row.is_isolate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub focal_id: String,
    pub error: String,
}

/// Destination for batch rows.
pub trait ResultSink {
    fn write_result(&mut self, row: &ResultRow) -> Result<()>;
    fn write_point(&mut self, row: &TimeseriesRow) -> Result<()>;
    fn write_error(&mut self, row: &ErrorRow) -> Result<()>;
    fn finish(&mut self) -> Result<()>;
}

/// Collects rows in memory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct VecSink {
    pub results: Vec<ResultRow>,
    pub points: Vec<TimeseriesRow>,
    pub errors: Vec<ErrorRow>,
}

impl ResultSink for VecSink {
    fn write_result(&mut self, row: &ResultRow) -> Result<()> {
        self.results.push(row.clone());
        Ok(())
    }

    fn write_point(&mut self, row: &TimeseriesRow) -> Result<()> {
        self.points.push(row.clone());
        Ok(())
    }

    fn write_error(&mut self, row: &ErrorRow) -> Result<()> {
        self.errors.push(row.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Writes CSV or JSON lines. In CSV mode error rows go to a separate
/// writer when one is given and are otherwise dropped after counting; in
/// JSON-lines mode they are written inline as `{"focal_id", "error"}`.
pub struct WriterSink<W: Write> {
    format: OutputFormat,
    csv: Option<csv::Writer<W>>,
    raw: Option<W>,
    errors: Option<csv::Writer<Box<dyn Write>>>,
}

fn sink_err(e: impl std::fmt::Display) -> Error {
    Error::SinkWriteFailure(e.to_string())
}

impl<W: Write> WriterSink<W> {
    pub fn new(out: W, format: OutputFormat) -> Self {
        match format {
            OutputFormat::Csv => WriterSink {
                format,
                csv: Some(csv::Writer::from_writer(out)),
                raw: None,
                errors: None,
            },
            OutputFormat::Jsonl => WriterSink {
                format,
                csv: None,
                raw: Some(out),
                errors: None,
            },
        }
    }

    pub fn with_error_writer(mut self, errors: Box<dyn Write>) -> Self {
        self.errors = Some(csv::Writer::from_writer(errors));
        self
    }

    fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        match self.format {
            OutputFormat::Csv => self
                .csv
                .as_mut()
                .expect("csv writer")
                .serialize(row)
                .map_err(sink_err),
            OutputFormat::Jsonl => {
                let out = self.raw.as_mut().expect("raw writer");
                serde_json::to_writer(&mut *out, row).map_err(sink_err)?;
                out.write_all(b"\n").map_err(sink_err)
            }
        }
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.finish()?;
        match self.format {
            OutputFormat::Csv => self
                .csv
                .take()
                .expect("csv writer")
                .into_inner()
                .map_err(sink_err),
            OutputFormat::Jsonl => Ok(self.raw.take().expect("raw writer")),
        }
    }
}

impl<W: Write> ResultSink for WriterSink<W> {
    fn write_result(&mut self, row: &ResultRow) -> Result<()> {
        self.write(row)
    }

    fn write_point(&mut self, row: &TimeseriesRow) -> Result<()> {
        self.write(row)
    }

    fn write_error(&mut self, row: &ErrorRow) -> Result<()> {
        match (self.format, self.errors.as_mut()) {
            (OutputFormat::Jsonl, _) => self.write(row),
            (OutputFormat::Csv, Some(w)) => w.serialize(row).map_err(sink_err),
            (OutputFormat::Csv, None) => Ok(()),
        }
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(w) = self.csv.as_mut() {
            w.flush().map_err(sink_err)?;
        }
        if let Some(w) = self.raw.as_mut() {
            w.flush().map_err(sink_err)?;
        }
        if let Some(w) = self.errors.as_mut() {
            w.flush().map_err(sink_err)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub focal_nodes: usize,
    pub rows: usize,
    pub errors: usize,
    pub isolates: usize,
    pub horizon: i32,
    pub workers: usize,
    pub total_focal_only: usize,
    pub total_prior_only: usize,
    pub total_both: usize,
    pub mean_disruptiveness: f64,
    pub sd_disruptiveness: f64,
    pub min_disruptiveness: f64,
    pub max_disruptiveness: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
enum Item {
    Node(NodeIdx),
    Unknown(String),
}

impl Item {
    fn id<'g>(&'g self, graph: &'g CitationGraph) -> &'g str {
        match self {
            Item::Node(i) => graph.id(*i),
            Item::Unknown(s) => s,
        }
    }
}

enum Outcome {
    Single(NodeIdx, MeasureResult),
    Series(Vec<TimeseriesRow>, Option<MeasureResult>),
    Failed(ErrorRow),
}

fn resolve_selection(graph: &CitationGraph, selection: &FocalSelection) -> Vec<Item> {
    let mut items: Vec<Item> = match selection {
        FocalSelection::All => (0..graph.node_count() as NodeIdx)
            .filter(|&i| !graph.node(i).is_stub())
            .map(Item::Node)
            .collect(),
        FocalSelection::Ids(ids) => ids
            .iter()
            .map(|id| match graph.index_of(id) {
                Some(i) => Item::Node(i),
                None => Item::Unknown(id.clone()),
            })
            .collect(),
        FocalSelection::YearRange { from, to } => graph
            .year_index()
            .range(*from..=*to)
            .flat_map(|(_, v)| v.iter().copied().map(Item::Node))
            .collect(),
        FocalSelection::TopCited(k) => {
            let mut by_cites: Vec<NodeIdx> = (0..graph.node_count() as NodeIdx)
                .filter(|&i| !graph.node(i).is_stub())
                .collect();
            // node index order equals id order, so the stable sort breaks ties by id
            by_cites.sort_by_key(|&i| std::cmp::Reverse(graph.citers(i).len()));
            by_cites.truncate(*k);
            by_cites.into_iter().map(Item::Node).collect()
        }
    };
    // node index order equals id order, so known nodes sort by index
    let (mut known, mut unknown): (Vec<Item>, Vec<Item>) =
        items.drain(..).partition(|i| matches!(i, Item::Node(_)));
    known.sort_by_key(|i| match i {
        Item::Node(v) => *v,
        Item::Unknown(_) => NodeIdx::MAX,
    });
    known.dedup_by(|a, b| a.id(graph) == b.id(graph));
    if unknown.is_empty() {
        return known;
    }
    unknown.sort_by(|a, b| a.id(graph).cmp(b.id(graph)));
    unknown.dedup_by(|a, b| a.id(graph) == b.id(graph));
    items.reserve(known.len() + unknown.len());
    let (mut k, mut u) = (known.into_iter().peekable(), unknown.into_iter().peekable());
    while let (Some(a), Some(b)) = (k.peek(), u.peek()) {
        if a.id(graph) < b.id(graph) {
            items.extend(k.next());
        } else {
            items.extend(u.next());
        }
    }
    items.extend(k);
    items.extend(u);
    items
}

/// Runs `job` over `graph`, streaming rows into `sink` in focal-id order.
pub fn run_batch(
    graph: &CitationGraph,
    job: &BatchJob,
    sink: &mut dyn ResultSink,
) -> Result<BatchSummary> {
    if job.workers == 0 {
        return Err(Error::ZeroWorkers);
    }
    job.weights.validate()?;
    if let Some((from, to)) = job.timeseries {
        if from > to {
            return Err(Error::InvalidYearRange { from, to });
        }
    }
    let started = Instant::now();
    let horizon = match job.horizon {
        Some(t) => t,
        None => graph.year_span().map(|(_, hi)| hi).ok_or(Error::EmptySelection)?,
    };
    let items = resolve_selection(graph, &job.selection);
    if items.is_empty() {
        return Err(Error::EmptySelection);
    }
    info!(
        "batch: {} focal nodes, t = {horizon}, {} workers",
        items.len(),
        job.workers
    );

    let opts = MeasureOptions {
        context: ContextOptions {
            horizon,
            window: job.window,
            include_focal_citers: job.include_focal_citers,
        },
        incidence: job.incidence,
        weights: job.weights.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let compute = |builder: &mut ContextBuilder, item: &Item| -> Outcome {
        let idx = match item {
            Item::Node(i) => *i,
            Item::Unknown(id) => {
                return Outcome::Failed(ErrorRow {
                    focal_id: id.clone(),
                    error: Error::UnknownNode(id.clone()).to_string(),
                })
            }
        };
        let id = graph.id(idx);
        let fail = |e: Error| {
            Outcome::Failed(ErrorRow {
                focal_id: id.to_string(),
                error: e.to_string(),
            })
        };
        match job.timeseries {
            None => {
                let res = builder
                    .build(graph, &[idx], &opts.context)
                    .and_then(|ctx| evaluate(graph, &ctx, opts.incidence, &opts.weights));
                match res {
                    Ok(r) => Outcome::Single(idx, r),
                    Err(e) => fail(e),
                }
            }
            Some((from, to)) => match disruptiveness_timeseries(graph, &[idx], from, to, &opts) {
                Ok(points) => {
                    let last = points.last().map(|(_, r)| r.clone());
                    let rows = points
                        .iter()
                        .map(|(y, r)| TimeseriesRow::new(id, *y, r))
                        .collect();
                    Outcome::Series(rows, last)
                }
                Err(e) => fail(e),
            },
        }
    };

    let mut moments = RunningMoments::new();
    let mut summary = BatchSummary {
        focal_nodes: items.len(),
        rows: 0,
        errors: 0,
        isolates: 0,
        horizon,
        workers: job.workers,
        total_focal_only: 0,
        total_prior_only: 0,
        total_both: 0,
        mean_disruptiveness: f64::NAN,
        sd_disruptiveness: f64::NAN,
        min_disruptiveness: f64::NAN,
        max_disruptiveness: f64::NAN,
        wall_time_secs: 0.0,
    };
    let mut tally = |r: &MeasureResult, summary: &mut BatchSummary| {
        summary.isolates += usize::from(r.is_isolate);
        summary.total_focal_only += r.count_focal_only;
        summary.total_prior_only += r.count_prior_only;
        summary.total_both += r.count_both;
        moments.push(r.disruptiveness);
    };

    let mut row = ResultRow::new("", &MeasureResult::default());
    for (shard_no, shard) in items.chunks(job.shard_size.max(1)).enumerate() {
        let outcomes: Vec<Outcome> = pool.install(|| {
            shard
                .par_iter()
                .with_min_len(64)
                .map_init(ContextBuilder::new, compute)
                .collect()
        });
        debug!("shard {shard_no}: {} rows", outcomes.len());
        for outcome in outcomes {
            match outcome {
                Outcome::Single(idx, r) => {
                    row.fill(graph.id(idx), &r);
                    sink.write_result(&row)?;
                    summary.rows += 1;
                    tally(&r, &mut summary);
                }
                Outcome::Series(rows, last) => {
                    for row in &rows {
                        sink.write_point(row)?;
                    }
                    summary.rows += rows.len();
                    if let Some(r) = last {
                        tally(&r, &mut summary);
                    }
                }
                Outcome::Failed(err) => {
                    sink.write_error(&err)?;
                    summary.errors += 1;
                }
            }
        }
    }
    sink.finish()?;

    if moments.count() > 0 {
        summary.mean_disruptiveness = moments.mean();
        summary.sd_disruptiveness = moments.sd();
        summary.min_disruptiveness = moments.min();
        summary.max_disruptiveness = moments.max();
    }
    summary.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(summary)
}
