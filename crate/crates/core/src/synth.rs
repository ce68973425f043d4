//! Synthetic inputs: published illustrative-patent fixtures, random citation
//! graphs for scale tests, and Poisson event panels with a known effect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::did::{Group, PanelRow};
use crate::graph::{CitationEdge, NodeRecord};

/// One illustrative patent with its citer class counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IllustrativePatent {
    pub patent: &'static str,
    pub forward_cites: u32,
    pub backward_cites: u32,
    /// Published value, rounded to two decimals.
    pub disruptiveness: f64,
    pub focal_only: u32,
    pub prior_only: u32,
    pub both: u32,
    pub application_year: i32,
    pub grant_year: i32,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    patent: &'static str,
    forward_cites: u32,
    backward_cites: u32,
    disruptiveness: f64,
    focal_only: u32,
    prior_only: u32,
    both: u32,
    application_year: i32,
    grant_year: i32,
) -> IllustrativePatent {
    IllustrativePatent {
        patent,
        forward_cites,
        backward_cites,
        disruptiveness,
        focal_only,
        prior_only,
        both,
        application_year,
        grant_year,
    }
}

/// Eighteen well-known US patents, from most amplifying to most disruptive.
pub const ILLUSTRATIVE_PATENTS: [IllustrativePatent; 18] = [
    row("4637464", 194, 7, -0.90, 2, 17, 192, 1984, 1987),
    row("4573530", 192, 6, -0.89, 1, 21, 191, 1983, 1986),
    row("4658215", 200, 4, -0.87, 7, 13, 193, 1986, 1987),
    row("4928765", 195, 10, -0.85, 2, 29, 193, 1988, 1990),
    row("6958436", 150, 5, -0.85, 0, 26, 150, 2002, 2005),
    row("5015744", 173, 4, -0.36, 32, 129, 141, 1989, 1991),
    row("6376284", 175, 19, -0.24, 14, 446, 161, 2000, 2002),
    row("6063738", 178, 12, -0.14, 65, 161, 113, 1999, 2000),
    row("4724318", 145, 2, 0.12, 89, 132, 56, 1986, 1988),
    row("5016107", 163, 17, 0.14, 126, 482, 37, 1989, 1991),
    row("6285999", 193, 7, 0.37, 178, 248, 15, 1998, 2001),
    row("4356429", 409, 4, 0.66, 358, 358, 51, 1980, 1982),
    row("4445050", 151, 4, 0.89, 151, 18, 0, 1981, 1984),
    row("5010405", 159, 2, 0.92, 159, 14, 0, 1989, 1991),
    row("4237224", 282, 1, 0.94, 277, 8, 5, 1979, 1980),
    row("4399216", 339, 2, 0.95, 338, 15, 1, 1980, 1983),
    row("4343993", 169, 0, 1.00, 169, 0, 0, 1980, 1982),
    row("4683202", 2211, 0, 1.00, 2211, 0, 0, 1985, 1987),
];

/// Year every illustrative citer is granted at the latest.
pub const ILLUSTRATIVE_HORIZON: i32 = 2010;

/// Graph reproducing one patent's neighborhood: `backward_cites` prior-art
/// nodes granted before it, and citers in the three classes granted after it.
/// Prior-only and both-class citers cite the first prior-art node. Citer ids
/// are `<patent>-f<k>`, `<patent>-p<k>`, `<patent>-b<k>`; prior art is
/// `<patent>-r<k>`.
pub fn illustrative_graph(p: &IllustrativePatent) -> (Vec<NodeRecord>, Vec<CitationEdge>) {
    let mut nodes = vec![NodeRecord::new(p.patent, p.grant_year).with_application_year(p.application_year)];
    let mut edges = Vec::new();
    let prior: Vec<String> = (0..p.backward_cites).map(|k| format!("{}-r{k}", p.patent)).collect();
    for (k, id) in prior.iter().enumerate() {
        nodes.push(NodeRecord::new(id, p.grant_year - 5 - k as i32 % 5));
        edges.push(CitationEdge::new(p.patent, id));
    }
    let span = (ILLUSTRATIVE_HORIZON - p.grant_year).max(1);
    let mut add = |tag: &str, count: u32, cites_focal: bool, cites_prior: bool| {
        for k in 0..count {
            let id = format!("{}-{tag}{k}", p.patent);
            nodes.push(NodeRecord::new(&id, p.grant_year + 1 + (k as i32 % span)));
            if cites_focal {
                edges.push(CitationEdge::new(&id, p.patent));
            }
            if cites_prior {
                edges.push(CitationEdge::new(&id, &prior[0]));
            }
        }
    };
    add("f", p.focal_only, true, false);
    add("p", p.prior_only, false, true);
    add("b", p.both, true, true);
    (nodes, edges)
}

/// Disjoint union of all illustrative neighborhoods.
pub fn illustrative_corpus() -> (Vec<NodeRecord>, Vec<CitationEdge>) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for p in &ILLUSTRATIVE_PATENTS {
        let (n, e) = illustrative_graph(p);
        nodes.extend(n);
        edges.extend(e);
    }
    (nodes, edges)
}

/// Citation history shaped like the eukaryotic cotransformation patent
/// (4,399,216, granted 1983): the 15 prior-only citations arrive in the first
/// two years, the lone both-class citation and a first wave of 30 focal-only
/// citations arrive in the third year after grant, and the remaining 308
/// focal-only citations accumulate steadily through 2010.
pub fn axel_history() -> (Vec<NodeRecord>, Vec<CitationEdge>) {
    const FOCAL: &str = "4399216";
    const GRANT: i32 = 1983;
    let mut nodes = vec![
        NodeRecord::new(FOCAL, GRANT).with_application_year(1980),
        NodeRecord::new("axel-r0", 1975),
        NodeRecord::new("axel-r1", 1978),
    ];
    let mut edges = vec![
        CitationEdge::new(FOCAL, "axel-r0"),
        CitationEdge::new(FOCAL, "axel-r1"),
    ];
    let mut citer = |tag: &str, k: usize, year: i32, focal: bool, prior: Option<&str>| {
        let id = format!("axel-{tag}{k}");
        nodes.push(NodeRecord::new(&id, year));
        if focal {
            edges.push(CitationEdge::new(&id, FOCAL));
        }
        if let Some(p) = prior {
            edges.push(CitationEdge::new(&id, p));
        }
    };
    for k in 0..15 {
        let year = if k < 10 { GRANT } else { GRANT + 1 };
        let prior = if k % 2 == 0 { "axel-r0" } else { "axel-r1" };
        citer("p", k, year, false, Some(prior));
    }
    citer("b", 0, GRANT + 3, true, Some("axel-r0"));
    for k in 0..30 {
        citer("f", k, GRANT + 3, true, None);
    }
    // 308 more over 1987..=2010 (24 years): 20 years of 13, 4 of 12
    let mut k = 30;
    for (i, year) in (GRANT + 4..=2010).enumerate() {
        let count = if i < 20 { 13 } else { 12 };
        for _ in 0..count {
            citer("f", k, year, true, None);
            k += 1;
        }
    }
    (nodes, edges)
}

/// Random citation graph: grant years uniform in `years`, nodes ordered by
/// year, and each edge from a uniformly chosen node to a uniformly chosen
/// earlier node. Duplicate draws are redrawn, so exactly `n_edges` distinct
/// edges result whenever that many exist.
pub fn random_citation_graph(
    n_nodes: usize,
    n_edges: usize,
    years: (i32, i32),
    seed: u64,
) -> (Vec<NodeRecord>, Vec<CitationEdge>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grant: Vec<i32> = (0..n_nodes).map(|_| rng.random_range(years.0..=years.1)).collect();
    grant.sort_unstable();
    let width = n_nodes.to_string().len();
    let ids: Vec<String> = (0..n_nodes).map(|i| format!("n{i:0width$}")).collect();
    let nodes = ids
        .iter()
        .zip(&grant)
        .map(|(id, &y)| NodeRecord::new(id, y))
        .collect();

    let max_edges = n_nodes.saturating_sub(1) * n_nodes / 2;
    let target = n_edges.min(max_edges);
    let mut seen = std::collections::HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let citing = rng.random_range(1..n_nodes);
        let cited = rng.random_range(0..citing);
        if seen.insert((citing, cited)) {
            edges.push(CitationEdge::new(&ids[citing], &ids[cited]));
        }
    }
    (nodes, edges)
}

/// Parameters for [`poisson_panel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelDesign {
    pub clusters_per_group: usize,
    pub window: (i32, i32),
    /// Cluster baseline rates are uniform on this interval.
    pub baseline: (f64, f64),
    /// Rate change after year 0 shared by both groups.
    pub common_trend: f64,
    /// Extra rate change for treated clusters after year 0.
    pub effect: f64,
}

impl Default for PanelDesign {
    fn default() -> Self {
        PanelDesign {
            clusters_per_group: 1000,
            window: (-5, 5),
            baseline: (1.0, 3.0),
            common_trend: 0.4,
            effect: 0.0,
        }
    }
}

/// Event panel with Poisson counts around cluster-specific baselines, so
/// rows within a cluster are correlated through the shared rate.
pub fn poisson_panel(design: &PanelDesign, seed: u64) -> Vec<PanelRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for group in [Group::Treated, Group::Control] {
        for c in 0..design.clusters_per_group {
            let base = rng.random_range(design.baseline.0..design.baseline.1);
            let pair_id = format!("{}{c:05}", if group == Group::Treated { "t" } else { "c" });
            for e in design.window.0..=design.window.1 {
                let mut rate = base;
                if e > 0 {
                    rate += design.common_trend;
                    if group == Group::Treated {
                        rate += design.effect;
                    }
                }
                let count = Poisson::new(rate.max(1e-9))
                    .map(|d| d.sample(&mut rng) as u32)
                    .unwrap_or(0);
                rows.push(PanelRow {
                    pair_id: pair_id.clone(),
                    group,
                    event_year: e,
                    citations: count,
                });
            }
        }
    }
    rows
}

/// Noise-free panel whose group-period means are exactly the given values
/// (each must be a multiple of 1/`clusters` to be representable by counts).
pub fn constant_panel(
    clusters: usize,
    window: (i32, i32),
    treated: (u32, u32),
    control: (u32, u32),
) -> Vec<PanelRow> {
    let mut rows = Vec::new();
    for (group, (pre, post), tag) in [(Group::Treated, treated, "t"), (Group::Control, control, "c")] {
        for c in 0..clusters {
            for e in window.0..=window.1 {
                rows.push(PanelRow {
                    pair_id: format!("{tag}{c}"),
                    group,
                    event_year: e,
                    citations: if e > 0 { post } else { pre },
                });
            }
        }
    }
    rows
}
