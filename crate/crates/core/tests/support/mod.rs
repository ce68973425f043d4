//! Test-only reference implementations. Everything here works from the raw
//! node and edge lists with dense matrices and plain loops, independent of
//! the engine's adjacency structures.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use cdindex::{CitationEdge, NodeRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Dense {
    pub ids: Vec<String>,
    pub years: Vec<i32>,
    /// adj[i][j]: i cites j
    pub adj: Vec<Vec<bool>>,
    pub pos: HashMap<String, usize>,
}

impl Dense {
    pub fn new(nodes: &[NodeRecord], edges: &[CitationEdge]) -> Dense {
        let ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
        let pos: HashMap<String, usize> = ids.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut adj = vec![vec![false; ids.len()]; ids.len()];
        for e in edges {
            adj[pos[&e.citing]][pos[&e.cited]] = true;
        }
        Dense {
            ids,
            years: nodes.iter().map(|n| n.grant_year).collect(),
            adj,
            pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub d: f64,
    pub r: f64,
    pub n: usize,
    pub focal_only: usize,
    pub prior_only: usize,
    pub both: usize,
}

/// Brute-force disruptiveness and radicalness. Single focal nodes use 0/1
/// incidences; focal sets use fractional incidences for D and raw counts
/// for R.
pub fn oracle(
    g: &Dense,
    focal: &[&str],
    horizon: i32,
    post_grant: bool,
    include_focal_citers: bool,
    weight: &dyn Fn(&str) -> f64,
) -> OracleResult {
    let focal: Vec<usize> = {
        let mut v: Vec<usize> = focal.iter().map(|f| g.pos[*f]).collect();
        v.sort();
        v.dedup();
        v
    };
    let is_focal: HashSet<usize> = focal.iter().copied().collect();
    let n_nodes = g.ids.len();
    let prior: Vec<usize> = (0..n_nodes)
        .filter(|k| !is_focal.contains(k) && focal.iter().any(|&j| g.adj[j][*k]))
        .collect();
    let m = focal.len() as f64;
    let q = prior.len() as f64;
    let min_year = focal.iter().map(|&j| g.years[j]).max().unwrap();

    let mut d_terms = Vec::new();
    let mut r_terms = Vec::new();
    let mut out = OracleResult {
        d: 0.0,
        r: 0.0,
        n: 0,
        focal_only: 0,
        prior_only: 0,
        both: 0,
    };
    for i in 0..n_nodes {
        if is_focal.contains(&i) && !include_focal_citers {
            continue;
        }
        if g.years[i] > horizon || (post_grant && g.years[i] < min_year) {
            continue;
        }
        let mut fh = 0usize;
        for &j in &focal {
            if g.adj[i][j] {
                fh += 1;
            }
        }
        let mut bh = 0usize;
        for &k in &prior {
            if g.adj[i][k] {
                bh += 1;
            }
        }
        if fh == 0 && bh == 0 {
            continue;
        }
        out.n += 1;
        match (fh > 0, bh > 0) {
            (true, false) => out.focal_only += 1,
            (false, true) => out.prior_only += 1,
            _ => out.both += 1,
        }
        let w = weight(&g.ids[i]);
        if focal.len() == 1 {
            let f = if fh > 0 { 1.0 } else { 0.0 };
            let b = if bh > 0 { 1.0 } else { 0.0 };
            d_terms.push(-2.0 * f * b + f);
            r_terms.push((-2.0 * f * b + f) / w);
        } else {
            let f = fh as f64 / m;
            let b = if prior.is_empty() { 0.0 } else { bh as f64 / q };
            d_terms.push(-2.0 * f * b + f);
            r_terms.push((-2.0 * fh as f64 * bh as f64 + fh as f64) / w);
        }
    }
    if out.n > 0 {
        out.d = exact_sum(&d_terms) / out.n as f64;
        out.r = exact_sum(&r_terms);
    }
    out
}

/// Correctly rounded sum via exact partials (Shewchuk).
pub fn exact_sum(xs: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &x in xs {
        let mut x = x;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    let mut total = 0.0;
    for p in partials.iter().rev() {
        total += p;
    }
    total
}

/// Random graph with arbitrary edge directions relative to grant years.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    max_edges: usize,
) -> (Vec<NodeRecord>, Vec<CitationEdge>) {
    let n = rng.random_range(2..=max_nodes);
    let nodes: Vec<NodeRecord> = (0..n)
        .map(|i| NodeRecord::new(format!("v{i}"), rng.random_range(1976..=2010)))
        .collect();
    let e = rng.random_range(0..=max_edges.min(n * (n - 1)));
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for _ in 0..e {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && seen.insert((a, b)) {
            edges.push(CitationEdge::new(&nodes[a].id, &nodes[b].id));
        }
    }
    (nodes, edges)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two-pass sample mean and SD.
pub fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Textbook two-pass Pearson correlation.
pub fn two_pass_pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = two_pass(x);
    let (my, _) = two_pass(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Quantile by sorting and indexing (type 7).
pub fn sort_index_quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let j = h as usize;
    if j + 1 < v.len() {
        v[j] + (h - j as f64) * (v[j + 1] - v[j])
    } else {
        v[j]
    }
}
