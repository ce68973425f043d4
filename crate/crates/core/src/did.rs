//! Event-time citation panels and difference-in-differences estimation with
//! a cluster (block) bootstrap.
//!
//! A cluster is one (focal, prior-art) pair. Its rows count the citations the
//! prior art received in each calendar year around the focal grant year. The
//! estimator compares treated and control group means over a pre window and
//! a post window of event years. The bootstrap resamples whole clusters
//! with replacement within each group, so every replicate keeps complete
//! time series.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::MatchedRow;
use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::stats::{quantile_sorted, RunningMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Treated,
    Control,
}

impl Group {
    pub fn swapped(self) -> Group {
        match self {
            Group::Treated => Group::Control,
            Group::Control => Group::Treated,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Group::Treated => "treated",
            Group::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelRow {
    pub pair_id: String,
    pub group: Group,
    pub event_year: i32,
    pub citations: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Panel {
    pub rows: Vec<PanelRow>,
    /// Clusters missing some window years because they fall outside the
    /// observed grant-year span.
    pub truncated: Vec<String>,
}

/// Inclusive range of event years.
pub type Window = (i32, i32);

fn check_window(w: Window) -> Result<()> {
    if w.0 > w.1 {
        Err(Error::WindowEmpty(w.0, w.1))
    } else {
        Ok(())
    }
}

fn in_window(w: Window, e: i32) -> bool {
    w.0 <= e && e <= w.1
}

/// Builds the panel for every matched row: one treated and one control
/// cluster each. Repeated pairs within a group (matching with replacement)
/// get a `#k` suffix so they stay separate clusters.
pub fn build_panel(graph: &CitationGraph, matched: &[MatchedRow], window: Window) -> Result<Panel> {
    check_window(window)?;
    let mut panel = Panel::default();
    let Some((first_year, last_year)) = graph.year_span() else {
        return Ok(panel);
    };
    let mut seen: HashMap<(Group, String), usize> = HashMap::new();
    for m in matched {
        for (group, focal, prior) in [
            (Group::Treated, &m.treated_focal, &m.treated_prior),
            (Group::Control, &m.control_focal, &m.control_prior),
        ] {
            let focal_year = graph.grant_year(graph.resolve(focal)?);
            let prior_idx = graph.resolve(prior)?;
            let base = format!("{focal}:{prior}");
            let n = seen.entry((group, base.clone())).or_insert(0);
            *n += 1;
            let pair_id = if *n == 1 { base } else { format!("{base}#{n}") };

            let mut by_year: BTreeMap<i32, u32> = BTreeMap::new();
            for &c in graph.citers(prior_idx) {
                *by_year.entry(graph.grant_year(c)).or_default() += 1;
            }
            let mut truncated = false;
            for e in window.0..=window.1 {
                let year = focal_year + e;
                if year < first_year || year > last_year {
                    truncated = true;
                    continue;
                }
                panel.rows.push(PanelRow {
                    pair_id: pair_id.clone(),
                    group,
                    event_year: e,
                    citations: by_year.get(&year).copied().unwrap_or(0),
                });
            }
            if truncated {
                panel.truncated.push(pair_id);
            }
        }
    }
    Ok(panel)
}

pub fn write_panel<W: Write>(out: W, panel: &[PanelRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in panel {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel<R: BufRead>(reader: R) -> Result<Vec<PanelRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidEstimate {
    pub treated_pre: f64,
    pub treated_post: f64,
    pub control_pre: f64,
    pub control_post: f64,
    /// treated − control, pre window.
    pub pre_diff: f64,
    /// treated − control, post window.
    pub post_diff: f64,
    pub did: f64,
    /// `did / (control_post − control_pre)` in percent.
    pub relative_decline: Option<f64>,
    pub se_bootstrap: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub replications: usize,
    pub seed: Option<u64>,
    pub clusters_treated: usize,
    pub clusters_control: usize,
    pub pre_window: Window,
    pub post_window: Window,
}

/// Per-cluster window sums; all the estimator needs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ClusterSums {
    pre_sum: f64,
    pre_n: u32,
    post_sum: f64,
    post_n: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct GroupSums {
    pre_sum: f64,
    pre_n: u64,
    post_sum: f64,
    post_n: u64,
}

impl GroupSums {
    fn add(&mut self, c: &ClusterSums) {
        self.pre_sum += c.pre_sum;
        self.pre_n += u64::from(c.pre_n);
        self.post_sum += c.post_sum;
        self.post_n += u64::from(c.post_n);
    }

    fn means(&self) -> Option<(f64, f64)> {
        (self.pre_n > 0 && self.post_n > 0)
            .then(|| (self.pre_sum / self.pre_n as f64, self.post_sum / self.post_n as f64))
    }
}

struct Clusters {
    treated: Vec<ClusterSums>,
    control: Vec<ClusterSums>,
}

fn collect_clusters(panel: &[PanelRow], pre: Window, post: Window) -> Result<Clusters> {
    check_window(pre)?;
    check_window(post)?;
    if pre.0 <= post.1 && post.0 <= pre.1 {
        return Err(Error::OverlappingWindows { pre, post });
    }
    let mut by_cluster: BTreeMap<(Group, &str), ClusterSums> = BTreeMap::new();
    for row in panel {
        let c = by_cluster.entry((row.group, row.pair_id.as_str())).or_default();
        let v = f64::from(row.citations);
        if in_window(pre, row.event_year) {
            c.pre_sum += v;
            c.pre_n += 1;
        } else if in_window(post, row.event_year) {
            c.post_sum += v;
            c.post_n += 1;
        }
    }
    let mut clusters = Clusters {
        treated: Vec::new(),
        control: Vec::new(),
    };
    for ((group, _), sums) in by_cluster {
        match group {
            Group::Treated => clusters.treated.push(sums),
            Group::Control => clusters.control.push(sums),
        }
    }
    Ok(clusters)
}

struct PointEstimate {
    treated: (f64, f64),
    control: (f64, f64),
}

impl PointEstimate {
    fn did(&self) -> f64 {
        let pre_diff = self.treated.0 - self.control.0;
        let post_diff = self.treated.1 - self.control.1;
        post_diff - pre_diff
    }
}

fn point<'a>(
    treated: impl Iterator<Item = &'a ClusterSums>,
    control: impl Iterator<Item = &'a ClusterSums>,
) -> Result<PointEstimate> {
    let mut t = GroupSums::default();
    treated.for_each(|c| t.add(c));
    let mut c = GroupSums::default();
    control.for_each(|x| c.add(x));
    Ok(PointEstimate {
        treated: t.means().ok_or(Error::MissingGroup(Group::Treated.name()))?,
        control: c.means().ok_or(Error::MissingGroup(Group::Control.name()))?,
    })
}

/// Difference-in-differences point estimate from group-period means.
pub fn did_estimate(panel: &[PanelRow], pre: Window, post: Window) -> Result<DidEstimate> {
    let clusters = collect_clusters(panel, pre, post)?;
    let p = point(clusters.treated.iter(), clusters.control.iter())?;
    let pre_diff = p.treated.0 - p.control.0;
    let post_diff = p.treated.1 - p.control.1;
    let did = post_diff - pre_diff;
    let growth = p.control.1 - p.control.0;
    Ok(DidEstimate {
        treated_pre: p.treated.0,
        treated_post: p.treated.1,
        control_pre: p.control.0,
        control_post: p.control.1,
        pre_diff,
        post_diff,
        did,
        relative_decline: (growth != 0.0).then(|| did / growth * 100.0),
        se_bootstrap: None,
        ci_low: None,
        ci_high: None,
        replications: 0,
        seed: None,
        clusters_treated: clusters.treated.len(),
        clusters_control: clusters.control.len(),
        pre_window: pre,
        post_window: post,
    })
}

pub const MIN_REPLICATIONS: usize = 100;

/// Generator for bootstrap replicate `rep`: the master seed selects the key
/// and the replicate number selects an independent stream.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Cluster draws of replicate `rep`: indices into the treated and control
/// cluster lists (in `(group, pair_id)` order), sampled with replacement.
pub fn bootstrap_draws(
    n_treated: usize,
    n_control: usize,
    seed: u64,
    rep: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = replicate_rng(seed, rep);
    let t = (0..n_treated).map(|_| rng.random_range(0..n_treated)).collect();
    let c = (0..n_control).map(|_| rng.random_range(0..n_control)).collect();
    (t, c)
}

/// Replicated DiD estimates in replicate order. Replicates where a group
/// has no rows in one of the windows come back as NaN.
pub fn bootstrap_replicates(
    panel: &[PanelRow],
    pre: Window,
    post: Window,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let clusters = collect_clusters(panel, pre, post)?;
    let (nt, nc) = (clusters.treated.len(), clusters.control.len());
    if nt < 2 || nc < 2 {
        return Err(Error::TooFewClusters {
            treated: nt,
            control: nc,
        });
    }
    Ok((0..replications)
        .into_par_iter()
        .map(|rep| {
            let (t, c) = bootstrap_draws(nt, nc, seed, rep);
            point(
                t.iter().map(|&i| &clusters.treated[i]),
                c.iter().map(|&i| &clusters.control[i]),
            )
            .map(|p| p.did())
            .unwrap_or(f64::NAN)
        })
        .collect())
}

/// Point estimate plus cluster-bootstrap standard error and 95% percentile
/// interval.
pub fn block_bootstrap(
    panel: &[PanelRow],
    pre: Window,
    post: Window,
    replications: usize,
    seed: u64,
) -> Result<DidEstimate> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::TooFewReplications(replications));
    }
    let mut est = did_estimate(panel, pre, post)?;
    let mut reps: Vec<f64> = bootstrap_replicates(panel, pre, post, replications, seed)?
        .into_iter()
        .filter(|d| d.is_finite())
        .collect();
    if reps.len() < 2 {
        return Err(Error::TooFewReplications(reps.len()));
    }
    let moments: RunningMoments = reps.iter().copied().collect();
    reps.sort_by(f64::total_cmp);
    est.se_bootstrap = Some(moments.sd());
    est.ci_low = Some(quantile_sorted(&reps, 0.025));
    est.ci_high = Some(quantile_sorted(&reps, 0.975));
    est.replications = reps.len();
    est.seed = Some(seed);
    Ok(est)
}

/// The panel with group labels exchanged.
pub fn swap_groups(panel: &[PanelRow]) -> Vec<PanelRow> {
    panel
        .iter()
        .map(|r| PanelRow {
            group: r.group.swapped(),
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CitationEdge, NodeRecord};

    fn rows(pair: &str, group: Group, counts: &[(i32, u32)]) -> Vec<PanelRow> {
        counts
            .iter()
            .map(|&(e, c)| PanelRow {
                pair_id: pair.into(),
                group,
                event_year: e,
                citations: c,
            })
            .collect()
    }

    const PRE: Window = (-5, -1);
    const POST: Window = (1, 5);

    fn flat(pair: &str, group: Group, pre: u32, post: u32) -> Vec<PanelRow> {
        let mut v: Vec<(i32, u32)> = (-5..=-1).map(|e| (e, pre)).collect();
        v.push((0, 99));
        v.extend((1..=5).map(|e| (e, post)));
        rows(pair, group, &v)
    }

    #[test]
    fn identical_groups_give_zero() {
        let mut p = flat("t1", Group::Treated, 2, 3);
        p.extend(flat("c1", Group::Control, 2, 3));
        let e = did_estimate(&p, PRE, POST).unwrap();
        assert_eq!(e.did, 0.0);
        assert_eq!(e.relative_decline, Some(0.0));
    }

    #[test]
    fn year_zero_excluded_by_default_windows() {
        let mut p = flat("t1", Group::Treated, 1, 1);
        p.extend(flat("c1", Group::Control, 1, 2));
        let e = did_estimate(&p, PRE, POST).unwrap();
        assert_eq!(e.did, -1.0);
        assert_eq!(e.relative_decline, Some(-100.0));
    }

    #[test]
    fn errors() {
        let p = flat("t1", Group::Treated, 1, 1);
        assert!(matches!(did_estimate(&p, PRE, POST), Err(Error::MissingGroup("control"))));
        assert!(matches!(
            did_estimate(&p, (-5, 1), (0, 5)),
            Err(Error::OverlappingWindows { .. })
        ));
        let mut two = flat("t1", Group::Treated, 1, 1);
        two.extend(flat("c1", Group::Control, 1, 1));
        assert!(matches!(
            block_bootstrap(&two, PRE, POST, 100, 1),
            Err(Error::TooFewClusters { treated: 1, control: 1 })
        ));
        assert!(matches!(
            block_bootstrap(&two, PRE, POST, 10, 1),
            Err(Error::TooFewReplications(10))
        ));
    }

    #[test]
    fn zero_noise_bootstrap_collapses() {
        let mut p = Vec::new();
        for i in 0..10 {
            p.extend(flat(&format!("t{i}"), Group::Treated, 2, 2));
            p.extend(flat(&format!("c{i}"), Group::Control, 2, 3));
        }
        let e = block_bootstrap(&p, PRE, POST, 200, 42).unwrap();
        assert_eq!(e.did, -1.0);
        assert_eq!(e.se_bootstrap, Some(0.0));
        assert_eq!((e.ci_low, e.ci_high), (Some(-1.0), Some(-1.0)));
    }

    #[test]
    fn panel_from_graph() {
        // prior art P (1990), focal F (1995) cites P, citers of P in 1994, 1996, 1996.
        let mut nodes = vec![
            NodeRecord::new("P", 1990),
            NodeRecord::new("F", 1995),
            NodeRecord::new("Q", 1990),
            NodeRecord::new("G", 1995),
        ];
        let mut edges = vec![CitationEdge::new("F", "P"), CitationEdge::new("G", "Q")];
        for (i, y) in [1994, 1996, 1996].iter().enumerate() {
            let id = format!("x{i}");
            nodes.push(NodeRecord::new(&id, *y));
            edges.push(CitationEdge::new(id, "P"));
        }
        let g = CitationGraph::finalize(nodes, &edges).unwrap();
        let m = MatchedRow {
            treated_focal: "F".into(),
            treated_prior: "P".into(),
            control_focal: "G".into(),
            control_prior: "Q".into(),
            focal_category: "x".into(),
            prior_art_category: "y".into(),
            focal_grant_year: 1995,
            separation_bin: "5".into(),
            recent_cites_bin: "1".into(),
            prior_art_count_bin: "1".into(),
        };
        let panel = build_panel(&g, &[m], (-1, 1)).unwrap();
        let treated: Vec<_> = panel
            .rows
            .iter()
            .filter(|r| r.group == Group::Treated)
            .map(|r| (r.event_year, r.citations))
            .collect();
        // F itself is granted in 1995 and cites P
        assert_eq!(treated, [(-1, 1), (0, 1), (1, 2)]);
        assert!(panel.truncated.is_empty());

        let wide = build_panel(&g, &[], (-5, 10)).unwrap();
        assert!(wide.rows.is_empty());
        assert!(matches!(build_panel(&g, &[], (3, 1)), Err(Error::WindowEmpty(3, 1))));
    }

    #[test]
    fn panel_csv_roundtrip() {
        let p = flat("a:b", Group::Control, 1, 2);
        let mut buf = Vec::new();
        write_panel(&mut buf, &p).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("pair_id,group,event_year,citations\n"));
        assert_eq!(read_panel(buf.as_slice()).unwrap(), p);
    }
}
