use std::fmt::Write as _;
use std::fs;
use std::io::Write;

use log::warn;
use serde_json::json;

use cdindex::batch::OutputFormat;
use cdindex::io::{create_output, write_edges, write_nodes};
use cdindex::stats::{summarize, yearly_distribution, SummaryTable, YearDistribution};
use cdindex::synth::{axel_history, illustrative_corpus, poisson_panel, random_citation_graph, PanelDesign};
use cdindex::Result;

use crate::args::{GenerateArgs, GenerateKind, StatsArgs};
use crate::common::{read_data_table, usage, Run};

const RESULT_COLUMNS: [&str; 6] = ["n", "f_only", "b_only", "both", "disruptiveness", "radicalness"];

fn summary_csv(table: &SummaryTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["variable".to_string(), "n".into(), "mean".into(), "sd".into(), "min".into(), "max".into()];
    header.extend(table.variables.iter().map(|v| format!("r_{}", v.name)));
    header.extend(table.variables.iter().map(|v| format!("p_{}", v.name)));
    w.write_record(&header)?;
    for (i, v) in table.variables.iter().enumerate() {
        let mut rec = vec![
            v.name.clone(),
            table.n.to_string(),
            v.mean.to_string(),
            v.sd.to_string(),
            v.min.to_string(),
            v.max.to_string(),
        ];
        let row = &table.correlations[i];
        rec.extend(row.iter().map(|c| c.map(|c| c.r.to_string()).unwrap_or_default()));
        rec.extend(
            row.iter()
                .map(|c| c.and_then(|c| c.p).map(|p| format!("{p:.4}")).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| usage(e.to_string()))
}

fn yearly_csv(dist: &[YearDistribution], quantiles: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["year".to_string(), "n".into(), "mean".into()];
    header.extend(quantiles.iter().map(|p| format!("q{p}")));
    w.write_record(&header)?;
    for d in dist {
        let mut rec = vec![d.year.to_string(), d.n.to_string(), d.mean.to_string()];
        rec.extend(d.quantiles.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| usage(e.to_string()))
}

fn yearly_text(dist: &[YearDistribution], quantiles: &[f64]) -> String {
    let mut out = format!("{:>6} {:>8} {:>10}", "year", "n", "mean");
    for p in quantiles {
        let _ = write!(out, " {:>10}", format!("q{p}"));
    }
    out.push('\n');
    for d in dist {
        let _ = write!(out, "{:>6} {:>8} {:>10.4}", d.year, d.n, d.mean);
        for (_, v) in &d.quantiles {
            let _ = write!(out, " {v:>10.4}");
        }
        out.push('\n');
    }
    out
}

fn write_machine(run: &Run, csv_bytes: impl FnOnce() -> Result<Vec<u8>>, json: serde_json::Value) -> Result<()> {
    if run.global.out.is_none() {
        return Ok(());
    }
    let mut out = run.output()?;
    match run.global.format {
        OutputFormat::Csv => out.write_all(&csv_bytes()?)?,
        OutputFormat::Jsonl => {
            serde_json::to_writer_pretty(&mut out, &json)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn stats(run: &mut Run, args: &StatsArgs) -> Result<()> {
    run.add_input(&args.input)?;
    let table = read_data_table(&args.input, run.delimiter()?)?;
    if let Some(&p) = args.quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(usage(format!("quantile {p} is outside [0, 1]")));
    }

    if let Some(year) = &args.by_year {
        let dist = yearly_distribution(&table, &args.value, year, &args.quantiles)?;
        print!("{}", yearly_text(&dist, &args.quantiles));
        write_machine(run, || yearly_csv(&dist, &args.quantiles), json!(dist))?;
    } else {
        let vars: Vec<String> = if args.vars.is_empty() {
            let known: Vec<String> = RESULT_COLUMNS
                .iter()
                .filter(|c| table.columns.iter().any(|h| h == *c))
                .map(|c| c.to_string())
                .collect();
            if known.is_empty() {
                table
                    .columns
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| table.rows.iter().all(|r| r.get(*i).is_some_and(|v| v.is_finite())))
                    .map(|(_, c)| c.clone())
                    .collect()
            } else {
                known
            }
        } else {
            args.vars.clone()
        };
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        let summary = summarize(&table, &names)?;
        for w in &summary.warnings {
            warn!("{w}");
        }
        print!("{}", summary.render_text());
        write_machine(run, || summary_csv(&summary), json!(summary))?;
    }
    run.echo(
        json!({
            "input": args.input,
            "vars": args.vars,
            "by_year": args.by_year,
            "value": args.value,
            "quantiles": args.quantiles,
        }),
        None,
    )
}

pub fn generate(run: &mut Run, args: &GenerateArgs) -> Result<()> {
    let dir = run
        .global
        .out
        .clone()
        .ok_or_else(|| usage("generate needs --out DIR"))?;
    fs::create_dir_all(&dir)?;
    let seed = run.global.seed;

    let graph = match args.kind {
        GenerateKind::Random => {
            let (mut nodes, edges) = random_citation_graph(args.n_nodes, args.n_edges, args.years, seed);
            if args.categories > 0 {
                for (i, n) in nodes.iter_mut().enumerate() {
                    n.category = Some(format!("c{}", i % args.categories));
                }
            }
            Some((nodes, edges))
        }
        GenerateKind::Illustrative => Some(illustrative_corpus()),
        GenerateKind::Axel => Some(axel_history()),
        GenerateKind::Panel => None,
    };
    match graph {
        Some((nodes, edges)) => {
            let mut out = create_output(&dir.join("nodes.csv"))?;
            write_nodes(&mut out, &nodes)?;
            out.flush()?;
            let mut out = create_output(&dir.join("edges.csv"))?;
            write_edges(&mut out, &edges)?;
            out.flush()?;
            println!("wrote {} nodes and {} edges to {}", nodes.len(), edges.len(), dir.display());
        }
        None => {
            let design = PanelDesign {
                clusters_per_group: args.clusters,
                common_trend: args.common_trend,
                effect: args.effect,
                ..PanelDesign::default()
            };
            let rows = poisson_panel(&design, seed);
            let mut out = create_output(&dir.join("panel.csv"))?;
            cdindex::did::write_panel(&mut out, &rows)?;
            out.flush()?;
            println!("wrote {} panel rows to {}", rows.len(), dir.display());
        }
    }
    run.echo(
        json!({
            "kind": format!("{:?}", args.kind).to_lowercase(),
            "n_nodes": args.n_nodes,
            "n_edges": args.n_edges,
            "years": args.years,
            "categories": args.categories,
            "clusters": args.clusters,
            "effect": args.effect,
            "common_trend": args.common_trend,
        }),
        Some(dir.join("config.json")),
    )
}
