use std::io::Write;

use log::{info, warn};
use serde_json::json;

use cdindex::batch::{
    run_batch, BatchJob, BatchSummary, ErrorRow, FocalSelection, OutputFormat, ResultRow,
    ResultSink, TimeseriesRow, WriterSink, DEFAULT_SHARD_SIZE,
};
use cdindex::measure::{disruptiveness_timeseries, measure};
use cdindex::{
    CitationGraph, ContextBuilder, ContextOptions, Incidence, MeasureOptions, MeasureResult,
    NodeIdx, Result,
};

use crate::args::{ComputeArgs, IncidenceArg, MeasureArgs, Selection, TimeseriesArgs};
use crate::common::Run;

/// Per-node summary lines are printed for explicit id lists up to this size.
const LISTED_LIMIT: usize = 20;

fn incidence(arg: IncidenceArg) -> Incidence {
    match arg {
        IncidenceArg::Auto => Incidence::Auto,
        IncidenceArg::Indicator => Incidence::Indicator,
        IncidenceArg::Fractional => Incidence::Fractional,
    }
}

fn resolved_name(arg: IncidenceArg, m: usize) -> &'static str {
    match (arg, m) {
        (IncidenceArg::Auto, 1) | (IncidenceArg::Indicator, _) => "indicator",
        _ => "fractional",
    }
}

fn selection(sel: &Selection) -> FocalSelection {
    if !sel.focal.is_empty() {
        FocalSelection::Ids(sel.focal.clone())
    } else if let Some((from, to)) = sel.year_range {
        FocalSelection::YearRange { from, to }
    } else if let Some(k) = sel.top_cited {
        FocalSelection::TopCited(k)
    } else {
        FocalSelection::All
    }
}

/// Forwards rows to the output sink while keeping what the summary needs.
/// Error rows are held back in CSV mode and written to their own file.
struct Tee<'a> {
    inner: &'a mut dyn ResultSink,
    format: OutputFormat,
    keep: bool,
    results: Vec<ResultRow>,
    last_points: Vec<TimeseriesRow>,
    errors: Vec<ErrorRow>,
}

impl ResultSink for Tee<'_> {
    fn write_result(&mut self, row: &ResultRow) -> Result<()> {
        if self.keep {
            self.results.push(row.clone());
        }
        self.inner.write_result(row)
    }

    fn write_point(&mut self, row: &TimeseriesRow) -> Result<()> {
        if self.keep {
            match self.last_points.last_mut() {
                Some(last) if last.focal_id == row.focal_id => *last = row.clone(),
                _ => self.last_points.push(row.clone()),
            }
        }
        self.inner.write_point(row)
    }

    fn write_error(&mut self, row: &ErrorRow) -> Result<()> {
        self.errors.push(row.clone());
        if self.format == OutputFormat::Jsonl {
            self.inner.write_error(row)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.inner.finish()
    }
}

fn counts_line(r: &ResultRow) -> String {
    format!(
        "{}: t = {}, n = {} ({} focal-only, {} prior-only, {} both), disruptiveness {:.2}, radicalness {:.4}",
        r.focal_id, r.t, r.n, r.f_only, r.b_only, r.both, r.disruptiveness, r.radicalness
    )
}

fn summary_line(s: &BatchSummary) -> String {
    let sd = if s.sd_disruptiveness.is_finite() {
        format!("{:.4}", s.sd_disruptiveness)
    } else {
        "n/a".to_string()
    };
    format!(
        "{} rows for {} focal nodes at t = {} on {} workers in {:.3}s: {} errors, {} isolates, \
         disruptiveness mean {:.4} sd {} min {:.4} max {:.4}",
        s.rows,
        s.focal_nodes,
        s.horizon,
        s.workers,
        s.wall_time_secs,
        s.errors,
        s.isolates,
        s.mean_disruptiveness,
        sd,
        s.min_disruptiveness,
        s.max_disruptiveness
    )
}

fn write_error_rows(run: &Run, tee: &Tee) -> Result<()> {
    for e in &tee.errors {
        warn!("{}: {}", e.focal_id, e.error);
    }
    if tee.format == OutputFormat::Csv && !tee.errors.is_empty() {
        if let Some(path) = run.side_path(".errors.csv") {
            let mut w = csv::Writer::from_writer(cdindex::io::create_output(&path)?);
            for e in &tee.errors {
                w.serialize(e)?;
            }
            w.flush()?;
            run.say(format!("{} error rows written to {}", tee.errors.len(), path.display()));
        }
    }
    Ok(())
}

fn resolve_set(graph: &CitationGraph, ids: &[String]) -> Result<Vec<NodeIdx>> {
    ids.iter().map(|id| graph.resolve(id)).collect()
}

fn measure_options(run: &Run, args: &MeasureArgs, horizon: i32, weights: cdindex::WeightScheme) -> MeasureOptions {
    MeasureOptions {
        context: ContextOptions {
            horizon,
            window: run.global.window,
            include_focal_citers: args.include_focal_citers,
        },
        incidence: incidence(args.incidence),
        weights,
    }
}

fn announce_set(run: &Run, args: &MeasureArgs, label: &str, r: &MeasureResult) {
    let name = resolved_name(args.incidence, r.focal_size);
    info!(
        "focal set {label}: generalized measure over m = {} focal nodes and q = {} prior-art nodes, {name} incidence",
        r.focal_size, r.prior_art_size
    );
    run.say(format!(
        "focal set {label} (m = {}, q = {}): generalized measure, {name} incidence",
        r.focal_size, r.prior_art_size
    ));
}

fn batch_job(run: &Run, args: &MeasureArgs, horizon: i32, weights: cdindex::WeightScheme) -> BatchJob {
    BatchJob {
        selection: selection(&args.selection),
        horizon: Some(horizon),
        window: run.global.window,
        include_focal_citers: args.include_focal_citers,
        incidence: incidence(args.incidence),
        weights,
        timeseries: None,
        workers: run.global.workers,
        shard_size: DEFAULT_SHARD_SIZE,
    }
}

fn echo_parameters(args: &MeasureArgs, horizon: i32) -> serde_json::Value {
    let sel = &args.selection;
    json!({
        "focal": sel.focal,
        "focal_set": sel.focal_set,
        "all": sel.all,
        "year_range": sel.year_range,
        "top_cited": sel.top_cited,
        "include_focal_citers": args.include_focal_citers,
        "incidence": format!("{:?}", args.incidence).to_lowercase(),
        "horizon": horizon,
        "shard_size": DEFAULT_SHARD_SIZE,
    })
}

pub fn compute(run: &mut Run, args: &ComputeArgs) -> Result<()> {
    let graph = run.load_graph()?;
    let weights = run.weights()?;
    let horizon = run.horizon(&graph)?;
    let m = &args.measure;
    let format = run.global.format;

    if !m.selection.focal_set.is_empty() {
        let focal = resolve_set(&graph, &m.selection.focal_set)?;
        let opts = measure_options(run, m, horizon, weights);
        let r = measure(&graph, &mut ContextBuilder::new(), &focal, &opts)?;
        let label = m.selection.focal_set.join("+");
        let row = ResultRow::new(&label, &r);
        let mut sink = WriterSink::new(run.output()?, format);
        sink.write_result(&row)?;
        sink.into_inner()?.flush()?;
        announce_set(run, m, &label, &r);
        run.say(counts_line(&row));
    } else {
        let job = batch_job(run, m, horizon, weights);
        let mut sink = WriterSink::new(run.output()?, format);
        let mut tee = Tee {
            inner: &mut sink,
            format,
            keep: !m.selection.focal.is_empty() && m.selection.focal.len() <= LISTED_LIMIT,
            results: Vec::new(),
            last_points: Vec::new(),
            errors: Vec::new(),
        };
        let summary = run_batch(&graph, &job, &mut tee)?;
        write_error_rows(run, &tee)?;
        for r in &tee.results {
            run.say(counts_line(r));
        }
        sink.into_inner()?.flush()?;
        run.say(summary_line(&summary));
    }
    run.echo(echo_parameters(m, horizon), None)
}

pub fn timeseries(run: &mut Run, args: &TimeseriesArgs) -> Result<()> {
    let graph = run.load_graph()?;
    let weights = run.weights()?;
    let horizon = run.horizon(&graph)?;
    let to = args.to.unwrap_or(horizon);
    let from = match args.from {
        Some(y) => y,
        None => graph.year_span().map(|(lo, _)| lo).unwrap_or(to),
    };
    let m = &args.measure;
    let format = run.global.format;

    if !m.selection.focal_set.is_empty() {
        let focal = resolve_set(&graph, &m.selection.focal_set)?;
        let opts = measure_options(run, m, to, weights);
        let series = disruptiveness_timeseries(&graph, &focal, from, to, &opts)?;
        let label = m.selection.focal_set.join("+");
        let mut sink = WriterSink::new(run.output()?, format);
        for (year, r) in &series {
            sink.write_point(&TimeseriesRow::new(&label, *year, r))?;
        }
        sink.into_inner()?.flush()?;
        if let Some((year, r)) = series.last() {
            announce_set(run, m, &label, r);
            run.say(format!("{label}: final disruptiveness {:.2} at {year}", r.disruptiveness));
        }
    } else {
        let mut job = batch_job(run, m, to, weights);
        job.timeseries = Some((from, to));
        let mut sink = WriterSink::new(run.output()?, format);
        let mut tee = Tee {
            inner: &mut sink,
            format,
            keep: !m.selection.focal.is_empty() && m.selection.focal.len() <= LISTED_LIMIT,
            results: Vec::new(),
            last_points: Vec::new(),
            errors: Vec::new(),
        };
        let summary = run_batch(&graph, &job, &mut tee)?;
        write_error_rows(run, &tee)?;
        for p in &tee.last_points {
            run.say(format!(
                "{}: final disruptiveness {:.2} at {} (n = {})",
                p.focal_id, p.disruptiveness, p.year, p.n
            ));
        }
        sink.into_inner()?.flush()?;
        run.say(format!(
            "{} points for {} focal nodes over {from}..={to}, {} errors",
            summary.rows, summary.focal_nodes, summary.errors
        ));
    }
    let mut params = echo_parameters(m, to);
    params["from"] = json!(from);
    params["to"] = json!(to);
    run.echo(params, None)
}
