//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod support;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cdindex::batch::{run_batch, BatchJob, FocalSelection, OutputFormat, VecSink, WriterSink};
use cdindex::cem::{
    bin_prior_art_count, bin_recent_cites, bin_separation, match_pairs, Bin, MatchOptions,
    MatchedRow, PairRecord, StratumKey, PRIOR_ART_COUNT_BINS, RECENT_CITES_BINS, SEPARATION_BINS,
};
use cdindex::did::{block_bootstrap, did_estimate, Group, PanelRow};
use cdindex::measure::{
    disruptiveness, disruptiveness_from_counts, disruptiveness_timeseries, evaluate, radicalness,
};
use cdindex::synth::{
    axel_history, illustrative_corpus, poisson_panel, random_citation_graph, PanelDesign,
    ILLUSTRATIVE_HORIZON, ILLUSTRATIVE_PATENTS,
};
use cdindex::{
    CitationEdge, CitationGraph, CiterWindow, ContextBuilder, ContextOptions, Incidence,
    MeasureOptions, NodeIdx, NodeRecord, WeightScheme,
};
use rand::Rng;
use support::{oracle, random_graph, rng, Dense};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1. Illustrative table: recomputed scores match the printed two-decimal column.
fn illustrative_table() -> Outcome {
    let started = Instant::now();
    let (nodes, edges) = illustrative_corpus();
    let g = CitationGraph::finalize(nodes, &edges).unwrap();
    let job = BatchJob {
        selection: FocalSelection::Ids(ILLUSTRATIVE_PATENTS.iter().map(|p| p.patent.to_string()).collect()),
        horizon: Some(ILLUSTRATIVE_HORIZON),
        ..Default::default()
    };
    let mut sink = VecSink::default();
    run_batch(&g, &job, &mut sink).unwrap();
    let by_id: HashMap<&str, f64> = sink
        .results
        .iter()
        .map(|r| (r.focal_id.as_str(), r.disruptiveness))
        .collect();
    let elapsed = started.elapsed();
    let mut misses = Vec::new();
    for p in &ILLUSTRATIVE_PATENTS {
        let got = by_id[p.patent];
        if (got - p.disruptiveness).abs() > 0.005 {
            misses.push(format!("{}: got {got:.4}, printed {:.2}", p.patent, p.disruptiveness));
        }
    }
    let within = ILLUSTRATIVE_PATENTS.len() - misses.len();
    let mut detail = format!(
        "{within}/{} rows within 0.005, {:.3}s",
        ILLUSTRATIVE_PATENTS.len(),
        secs(elapsed)
    );
    if !misses.is_empty() {
        detail.push_str(&format!("; mismatched: {}", misses.join(", ")));
    }
    outcome(misses.is_empty() && elapsed < Duration::from_secs(1), detail)
}

/// Every context evaluated in the random-graph suite.
struct SuiteStats {
    min_d: f64,
    max_d: f64,
    contexts: usize,
    reduction_mismatches: usize,
    reduction_checked: usize,
}

// 2. Engine equals the dense oracle on random graphs (3 and 4 ride along).
fn oracle_equivalence(stats: &mut SuiteStats) -> Outcome {
    let started = Instant::now();
    let mut r = rng(0x5eed);
    let mut builder = ContextBuilder::new();
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    let mut checks = 0usize;
    for case in 0..1000 {
        let (nodes, edges) = random_graph(&mut r, 200, 2000);
        let dense = Dense::new(&nodes, &edges);
        let weights: HashMap<String, f64> = nodes
            .iter()
            .map(|n| (n.id.clone(), r.random_range(0.5..3.0)))
            .collect();
        let scheme = WeightScheme::table(weights.clone());
        let horizon = r.random_range(1990..=2012);
        let include = case % 2 == 1;
        let g = CitationGraph::finalize(nodes, &edges).unwrap();
        let n = g.node_count() as NodeIdx;
        for window in [CiterWindow::PostGrant, CiterWindow::AllYears] {
            for v in 0..n {
                for m in 1..=3u32.min(n) {
                    let mut set = vec![v];
                    while (set.len() as u32) < m {
                        let u = r.random_range(0..n);
                        if !set.contains(&u) {
                            set.push(u);
                        }
                    }
                    let opts = ContextOptions {
                        horizon,
                        window,
                        include_focal_citers: include && m > 1,
                    };
                    let ctx = builder.build(&g, &set, &opts).unwrap();
                    let got = evaluate(&g, &ctx, Incidence::Auto, &scheme).unwrap();
                    let ids: Vec<&str> = set.iter().map(|&i| g.id(i)).collect();
                    let want = oracle(
                        &dense,
                        &ids,
                        horizon,
                        window == CiterWindow::PostGrant,
                        opts.include_focal_citers,
                        &|id| weights[id],
                    );
                    let err = (got.disruptiveness - want.d)
                        .abs()
                        .max((got.radicalness - want.r).abs());
                    worst = worst.max(err);
                    checks += 1;
                    if err > 1e-12 || got.n_citers != want.n {
                        failures += 1;
                    }

                    stats.contexts += 1;
                    stats.min_d = stats.min_d.min(got.disruptiveness);
                    stats.max_d = stats.max_d.max(got.disruptiveness);
                    if m == 1 {
                        let (fo, bo, both) = ctx.class_counts();
                        let general = disruptiveness(&ctx, Incidence::Indicator);
                        let auto = disruptiveness(&ctx, Incidence::Auto);
                        let direct = disruptiveness_from_counts(fo, bo, both);
                        let r_general = radicalness(&g, &ctx, Incidence::Indicator, &WeightScheme::uniform()).unwrap();
                        let r_direct = fo as f64 - both as f64;
                        stats.reduction_checked += 1;
                        if general.to_bits() != direct.to_bits()
                            || auto.to_bits() != direct.to_bits()
                            || r_general.to_bits() != r_direct.to_bits()
                        {
                            stats.reduction_mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{checks} focal sets over 1000 graphs, {failures} mismatches, max |err| {worst:.1e}, {:.1}s",
            secs(elapsed)
        ),
    )
}

/// Focal "F" with prior art p0, p1 and citers of the given kinds:
/// 'f' cites F, 'b' cites F and p0, 'p' cites p1.
fn constructed(kinds: &str) -> f64 {
    let mut nodes = vec![
        NodeRecord::new("F", 2000),
        NodeRecord::new("p0", 1990),
        NodeRecord::new("p1", 1991),
    ];
    let mut edges = vec![CitationEdge::new("F", "p0"), CitationEdge::new("F", "p1")];
    for (i, k) in kinds.chars().enumerate() {
        let id = format!("c{i}");
        nodes.push(NodeRecord::new(&id, 2001));
        match k {
            'f' => edges.push(CitationEdge::new(&id, "F")),
            'b' => {
                edges.push(CitationEdge::new(&id, "F"));
                edges.push(CitationEdge::new(&id, "p0"));
            }
            _ => edges.push(CitationEdge::new(&id, "p1")),
        }
    }
    let g = CitationGraph::finalize(nodes, &edges).unwrap();
    let f = g.resolve("F").unwrap();
    let ctx = ContextBuilder::new().build(&g, &[f], &ContextOptions::at(2010)).unwrap();
    evaluate(&g, &ctx, Incidence::Auto, &WeightScheme::uniform())
        .unwrap()
        .disruptiveness
}

// 3. Range over the whole suite, plus exact extremes.
fn range_and_extremes(stats: &SuiteStats) -> Outcome {
    let extremes = [
        ("all focal-only", constructed("ffffff"), 1.0),
        ("all both", constructed("bbbb"), -1.0),
        ("all prior-only", constructed("ppppp"), 0.0),
        ("isolate", constructed(""), 0.0),
    ];
    let bad: Vec<String> = extremes
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    let in_range = stats.min_d >= -1.0 && stats.max_d <= 1.0;
    let mut detail = format!(
        "{} contexts, D in [{:.3}, {:.3}], extremes 1/-1/0/0 {}",
        stats.contexts,
        stats.min_d,
        stats.max_d,
        if bad.is_empty() { "exact" } else { "wrong" }
    );
    if !bad.is_empty() {
        detail.push_str(&format!(": {}", bad.join(", ")));
    }
    outcome(in_range && bad.is_empty(), detail)
}

// 4. Single focal node: general per-citer path equals the class-count formula bit for bit.
fn reduction(stats: &SuiteStats) -> Outcome {
    outcome(
        stats.reduction_mismatches == 0 && stats.reduction_checked > 0,
        format!(
            "{} single-focal contexts, {} bit mismatches",
            stats.reduction_checked, stats.reduction_mismatches
        ),
    )
}

fn pair(tag: &str, i: usize, cat: &str, year: i32, sep: i32, recent: u32, count: u32) -> PairRecord {
    PairRecord {
        focal_id: format!("{tag}{i:04}"),
        prior_art_id: format!("{tag}{i:04}-p"),
        focal_category: cat.into(),
        prior_art_category: "Y".into(),
        focal_grant_year: year,
        separation_years: sep,
        prior_art_recent_cites: recent,
        focal_prior_art_count: count,
    }
}

fn bins_partition(bins: &[Bin], f: fn(i64) -> cdindex::Result<Bin>, lowest: i64) -> bool {
    (0..=1000i64).all(|v| {
        let hits: Vec<&Bin> = bins.iter().filter(|b| b.contains(v as u32)).collect();
        if v < lowest {
            hits.is_empty() && f(v).is_err()
        } else {
            hits.len() == 1 && f(v).ok().as_ref() == Some(hits[0])
        }
    })
}

// 5. Matching: counting oracle, exact strata, bin partitions.
fn cem_correctness() -> Outcome {
    // known occupancies: stratum s gets t_s treated and c_s control pairs
    let occupancy: [(&str, i32, i32, u32, u32, usize, usize); 6] = [
        ("A", 1990, 1, 1, 1, 5, 3),
        ("A", 1990, 4, 12, 2, 2, 7),
        ("B", 1990, 9, 50, 6, 4, 4),
        ("B", 1991, 13, 3, 15, 6, 0),
        ("C", 1991, 0, 17, 11, 0, 5),
        ("C", 1992, 7, 8, 3, 9, 1),
    ];
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for &(cat, year, sep, recent, count, t, c) in &occupancy {
        for _ in 0..t {
            treated.push(pair("t", treated.len(), cat, year, sep, recent, count));
        }
        for _ in 0..c {
            control.push(pair("c", control.len(), cat, year, sep, recent, count));
        }
    }
    let want: usize = occupancy.iter().map(|o| o.5.min(o.6)).sum();
    let out = match_pairs(&treated, &control, &MatchOptions { seed: 17, with_replacement: false }).unwrap();
    let key_fields_agree = out.matched.iter().all(|m| {
        let (a, b): (StratumKey, StratumKey) = (m.treated.stratum().unwrap(), m.control.stratum().unwrap());
        a == b && a == m.stratum
    });
    let mut used: Vec<&str> = out.matched.iter().map(|m| m.control.focal_id.as_str()).collect();
    used.sort();
    let before = used.len();
    used.dedup();
    let no_reuse = used.len() == before;
    let bins_ok = bins_partition(&SEPARATION_BINS, bin_separation, 0)
        && bins_partition(&RECENT_CITES_BINS, bin_recent_cites, 1)
        && bins_partition(&PRIOR_ART_COUNT_BINS, bin_prior_art_count, 1);
    outcome(
        out.matched.len() == want && key_fields_agree && no_reuse && bins_ok,
        format!(
            "matched {} (oracle {want}), keys agree: {key_fields_agree}, controls unique: {no_reuse}, bins partition 0..=1000: {bins_ok}",
            out.matched.len()
        ),
    )
}

fn fixture_gap_panel() -> Vec<PanelRow> {
    // 100 clusters per group; treated pre mean 0.96 vs control 1.00,
    // treated post mean 1.67 vs control 2.00
    let mut rows = Vec::new();
    for c in 0..100u32 {
        for e in (-5..=-1).chain(1..=5) {
            let (t, k) = if e < 0 {
                (u32::from(c >= 4), 1)
            } else {
                (if c < 33 { 1 } else { 2 }, 2)
            };
            rows.push(PanelRow { pair_id: format!("t{c}"), group: Group::Treated, event_year: e, citations: t });
            rows.push(PanelRow { pair_id: format!("c{c}"), group: Group::Control, event_year: e, citations: k });
        }
    }
    rows
}

// 6. DiD recovers injected effects; percentile intervals have nominal coverage.
fn did_recovery() -> Outcome {
    const PRE: (i32, i32) = (-5, -1);
    const POST: (i32, i32) = (1, 5);
    let started = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &effect) in [-0.5, -0.29, 0.0].iter().enumerate() {
        let design = PanelDesign {
            clusters_per_group: 1000,
            effect,
            ..Default::default()
        };
        let panel = poisson_panel(&design, 9000 + k as u64);
        let est = block_bootstrap(&panel, PRE, POST, 500, 100 + k as u64).unwrap();
        let se = est.se_bootstrap.unwrap();
        let within = (est.did - effect).abs() <= 2.0 * se;
        let mut covered = 0;
        for rep in 0..200u64 {
            let panel = poisson_panel(&design, 1_000_000 * (k as u64 + 1) + rep);
            let e = block_bootstrap(&panel, PRE, POST, 500, rep).unwrap();
            if e.ci_low.unwrap() <= effect && effect <= e.ci_high.unwrap() {
                covered += 1;
            }
        }
        let coverage = covered as f64 / 200.0;
        let cover_ok = (0.92..=0.98).contains(&coverage);
        pass &= within && cover_ok;
        parts.push(format!(
            "delta {effect}: est {:.3} se {se:.3} coverage {:.1}%",
            est.did,
            coverage * 100.0
        ));
    }
    let fixture = did_estimate(&fixture_gap_panel(), PRE, POST).unwrap();
    let gaps_ok = (fixture.pre_diff + 0.04).abs() < 1e-12
        && (fixture.post_diff + 0.33).abs() < 1e-12
        && (fixture.did + 0.29).abs() < 1e-12;
    pass &= gaps_ok;
    parts.push(format!(
        "fixture gaps {:.2}/{:.2} -> {:.2}",
        fixture.pre_diff, fixture.post_diff, fixture.did
    ));
    parts.push(format!("{:.1}s", secs(started.elapsed())));
    outcome(pass, parts.join("; "))
}

fn batch_bytes(g: &CitationGraph, workers: usize, format: OutputFormat) -> Vec<u8> {
    let job = BatchJob {
        workers,
        shard_size: 4096,
        ..Default::default()
    };
    let mut sink = WriterSink::new(Vec::new(), format);
    run_batch(g, &job, &mut sink).unwrap();
    sink.into_inner().unwrap()
}

fn matched_csv(treated: &[PairRecord], control: &[PairRecord], seed: u64) -> Vec<u8> {
    let out = match_pairs(treated, control, &MatchOptions { seed, with_replacement: false }).unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in &out.matched {
        w.serialize(MatchedRow::from(m)).unwrap();
    }
    w.into_inner().unwrap()
}

// 7. Determinism across worker counts and under fixed seeds.
fn determinism() -> Outcome {
    let (nodes, edges) = random_citation_graph(20_000, 150_000, (1976, 2010), 77);
    let g = CitationGraph::finalize(nodes, &edges).unwrap();
    let mut batch_ok = true;
    for format in [OutputFormat::Csv, OutputFormat::Jsonl] {
        let one = batch_bytes(&g, 1, format);
        batch_ok &= [4, 8].iter().all(|&w| batch_bytes(&g, w, format) == one);
    }

    let mut r = rng(3);
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for i in 0..400 {
        let cat = ["A", "B", "C"][r.random_range(0..3)];
        let p = pair(if i % 2 == 0 { "t" } else { "c" }, i, cat, 1995, r.random_range(0..6), r.random_range(1..4), 2);
        if i % 2 == 0 {
            treated.push(p);
        } else {
            control.push(p);
        }
    }
    let match_ok = matched_csv(&treated, &control, 5) == matched_csv(&treated, &control, 5);

    let panel = poisson_panel(&PanelDesign { clusters_per_group: 300, effect: -0.2, ..Default::default() }, 4);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&block_bootstrap(&panel, (-5, -1), (1, 5), 400, 42).unwrap()).unwrap())
    };
    let reference = run(1);
    let boot_ok = run(1) == reference && run(4) == reference && run(8) == reference;
    outcome(
        batch_ok && match_ok && boot_ok,
        format!("batch bytes equal for workers 1/4/8: {batch_ok}, matching: {match_ok}, bootstrap: {boot_ok}"),
    )
}

fn timed_batch(g: &CitationGraph, workers: usize) -> Duration {
    let job = BatchJob {
        workers,
        ..Default::default()
    };
    (0..5)
        .map(|_| {
            let started = Instant::now();
            let mut sink = WriterSink::new(Vec::with_capacity(1 << 20), OutputFormat::Csv);
            run_batch(g, &job, &mut sink).unwrap();
            sink.into_inner().unwrap();
            started.elapsed()
        })
        .min()
        .unwrap()
}

// 8. Desk-scale batch time and growth.
fn performance() -> Outcome {
    let (nodes, edges) = random_citation_graph(10_000, 100_000, (1976, 2010), 1);
    let small = CitationGraph::finalize(nodes, &edges).unwrap();
    let (nodes, edges) = random_citation_graph(100_000, 1_000_000, (1976, 2010), 2);
    let large = CitationGraph::finalize(nodes, &edges).unwrap();
    let t_small = timed_batch(&small, 4);
    let t_large = timed_batch(&large, 4);
    let ratio = secs(t_large) / secs(t_small);
    outcome(
        t_large < Duration::from_secs(30) && ratio <= 12.0,
        format!(
            "1e5 nodes/1e6 edges {:.3}s on 4 workers; 1e4/1e5 {:.3}s; ratio {ratio:.1}x",
            secs(t_large),
            secs(t_small)
        ),
    )
}

// 9. Trajectory shape of the rising history fixture.
fn trajectory() -> Outcome {
    let (nodes, edges) = axel_history();
    let g = CitationGraph::finalize(nodes, &edges).unwrap();
    let f = g.resolve("4399216").unwrap();
    let series = disruptiveness_timeseries(&g, &[f], 1983, 2010, &MeasureOptions::default()).unwrap();
    let ds: Vec<f64> = series.iter().map(|(_, r)| r.disruptiveness).collect();
    let first = ds.iter().position(|&d| d != 0.0);
    let monotone = first.is_some_and(|i| ds[i..].windows(2).all(|w| w[1] >= w[0]));
    let last = *ds.last().unwrap();
    let first_year = first.map(|i| series[i].0);
    outcome(
        monotone && (last - 0.95).abs() <= 0.005,
        format!(
            "first nonzero year {:?}, non-decreasing after: {monotone}, final {last:.4}",
            first_year
        ),
    )
}

fn main() -> ExitCode {
    let mut stats = SuiteStats {
        min_d: f64::INFINITY,
        max_d: f64::NEG_INFINITY,
        contexts: 0,
        reduction_mismatches: 0,
        reduction_checked: 0,
    };
    let results = vec![
        ("illustrative table", illustrative_table()),
        ("oracle equivalence", oracle_equivalence(&mut stats)),
        ("range and extremes", range_and_extremes(&stats)),
        ("single-focal reduction", reduction(&stats)),
        ("matching correctness", cem_correctness()),
        ("did recovery", did_recovery()),
        ("determinism", determinism()),
        ("performance", performance()),
        ("trajectory shape", trajectory()),
    ];

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
