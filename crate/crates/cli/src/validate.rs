use std::collections::HashSet;
use std::io::Write;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use cdindex::cem::{
    match_pairs, pairs_for_focal, select_treated, MatchOptions, MatchedRow, PairRecord,
    TreatmentCandidate, TreatmentRule,
};
use cdindex::did::{block_bootstrap, build_panel, did_estimate, read_panel, write_panel, DidEstimate};
use cdindex::io::{create_output, open_input};
use cdindex::{Error, Result};

use crate::args::{DidArgs, MatchArgs};
use crate::common::{read_results, usage, Run};

#[derive(Serialize)]
struct UnmatchedRow<'a> {
    focal_id: &'a str,
    prior_art_id: &'a str,
    reason: &'static str,
}

pub fn cem(run: &mut Run, args: &MatchArgs) -> Result<()> {
    let graph = run.load_graph()?;
    run.add_input(&args.results)?;
    let results = read_results(&args.results, run.delimiter()?)?;

    let mut unknown = 0usize;
    let mut candidates = Vec::with_capacity(results.len());
    let mut indices = Vec::with_capacity(results.len());
    for r in &results {
        let Some(i) = graph.index_of(&r.focal_id) else {
            unknown += 1;
            continue;
        };
        candidates.push(TreatmentCandidate {
            focal_id: r.focal_id.clone(),
            disruptiveness: r.disruptiveness,
            prior_art_count: graph.cited_by(i).len(),
            category: graph.node(i).category.clone(),
        });
        indices.push(i);
    }
    if unknown > 0 {
        warn!("{unknown} result rows name nodes absent from the graph");
    }

    let rule = TreatmentRule {
        threshold_sd: args.threshold_sd,
        require_positive: !args.include_nonpositive,
        ..TreatmentRule::default()
    };
    let treated = select_treated(&candidates, &rule)?;
    let treated_ids: HashSet<&str> = treated.focal_ids.iter().map(String::as_str).collect();

    let mut treated_pairs: Vec<PairRecord> = Vec::new();
    let mut control_pool: Vec<PairRecord> = Vec::new();
    for (c, &i) in candidates.iter().zip(&indices) {
        let pairs = pairs_for_focal(&graph, i, args.min_prior_art_year);
        if treated_ids.contains(c.focal_id.as_str()) {
            treated_pairs.extend(pairs);
        } else {
            control_pool.extend(pairs);
        }
    }
    let opts = MatchOptions {
        seed: run.global.seed,
        with_replacement: args.with_replacement,
    };
    let outcome = match_pairs(&treated_pairs, &control_pool, &opts)?;

    let mut w = csv::Writer::from_writer(run.output()?);
    for m in &outcome.matched {
        w.serialize(MatchedRow::from(m))?;
    }
    if outcome.matched.is_empty() {
        // keep the file readable by `did`
        w.write_record([
            "treated_focal",
            "treated_prior",
            "control_focal",
            "control_prior",
            "focal_category",
            "prior_art_category",
            "focal_grant_year",
            "separation_bin",
            "recent_cites_bin",
            "prior_art_count_bin",
        ])?;
    }
    w.flush()?;

    if let Some(path) = run.side_path(".unmatched.csv") {
        let mut u = csv::Writer::from_writer(create_output(&path)?);
        u.write_record(["focal_id", "prior_art_id", "reason"])?;
        let rows = outcome
            .unmatched
            .iter()
            .map(|p| (p, "no control in stratum"))
            .chain(outcome.out_of_support.iter().map(|p| (p, "below binning support")));
        for (p, reason) in rows {
            u.serialize(UnmatchedRow {
                focal_id: &p.focal_id,
                prior_art_id: &p.prior_art_id,
                reason,
            })?;
        }
        u.flush()?;
    }

    let unmatched_focals = outcome.unmatched_focals();
    run.say(format!(
        "treated: {} focal nodes above {:.4} (mean {:.4}, sd {:.4})",
        treated.focal_ids.len(),
        treated.threshold,
        treated.mean,
        treated.sd
    ));
    run.say(format!(
        "pairs: {} treated, {} in control pool; matched {}, unmatched {}, below support {}; \
         {} treated focal nodes without any control",
        treated_pairs.len(),
        control_pool.len(),
        outcome.matched.len(),
        outcome.unmatched.len(),
        outcome.out_of_support.len(),
        unmatched_focals.len()
    ));
    run.echo(
        json!({
            "results": args.results,
            "threshold_sd": args.threshold_sd,
            "require_positive": rule.require_positive,
            "require_prior_art": rule.require_prior_art,
            "require_category": rule.require_category,
            "min_prior_art_year": args.min_prior_art_year,
            "with_replacement": args.with_replacement,
            "threshold": treated.threshold,
        }),
        None,
    )
}

#[derive(Serialize)]
struct DidReport<'a> {
    #[serde(flatten)]
    estimate: &'a DidEstimate,
    panel_rows: usize,
    truncated_clusters: usize,
}

pub fn did(run: &mut Run, args: &DidArgs) -> Result<()> {
    let (rows, truncated) = match (&args.matched, &args.panel) {
        (Some(matched), None) => {
            let graph = run.load_graph()?;
            run.add_input(matched)?;
            let mut rdr = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(open_input(matched)?);
            let pairs: Vec<MatchedRow> = rdr
                .deserialize()
                .map(|r| r.map_err(Error::from))
                .collect::<Result<_>>()?;
            let panel = build_panel(&graph, &pairs, args.panel_window)?;
            if !panel.truncated.is_empty() {
                info!("{} clusters fall partly outside the observed years", panel.truncated.len());
            }
            (panel.rows, panel.truncated.len())
        }
        (None, Some(path)) => {
            run.add_input(path)?;
            (read_panel(open_input(path)?)?, 0)
        }
        _ => return Err(usage("give exactly one of --matched and --panel")),
    };
    if let Some(path) = &args.panel_out {
        let mut out = create_output(path)?;
        write_panel(&mut out, &rows)?;
        out.flush()?;
    }

    let estimate = if args.reps == 0 {
        did_estimate(&rows, args.pre, args.post)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(run.global.workers.max(1))
            .build()
            .map_err(|e| usage(e.to_string()))?;
        pool.install(|| block_bootstrap(&rows, args.pre, args.post, args.reps, run.global.seed))?
    };
    let report = DidReport {
        estimate: &estimate,
        panel_rows: rows.len(),
        truncated_clusters: truncated,
    };
    let mut out = run.output()?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    out.flush()?;

    run.say(format!(
        "group means: treated {:.4} -> {:.4}, control {:.4} -> {:.4}",
        estimate.treated_pre, estimate.treated_post, estimate.control_pre, estimate.control_post
    ));
    let mut line = format!(
        "did {:.4} (pre gap {:.4}, post gap {:.4})",
        estimate.did, estimate.pre_diff, estimate.post_diff
    );
    if let (Some(se), Some(lo), Some(hi)) = (estimate.se_bootstrap, estimate.ci_low, estimate.ci_high) {
        line.push_str(&format!(
            ", se {se:.4}, 95% CI [{lo:.4}, {hi:.4}] from {} replications",
            estimate.replications
        ));
    }
    if let Some(rel) = estimate.relative_decline {
        line.push_str(&format!(", {rel:.1}% of control growth"));
    }
    run.say(line);
    run.echo(
        json!({
            "matched": args.matched,
            "panel": args.panel,
            "panel_window": args.panel_window,
            "pre": args.pre,
            "post": args.post,
            "reps": args.reps,
            "panel_out": args.panel_out,
        }),
        None,
    )
}
