//! Coarsened exact matching of (focal, prior-art) citation pairs.
//!
//! A pair is described by the categories of both nodes, the focal grant
//! year, and three coarsened counts: grant-year separation, citations the
//! prior art received around the focal grant, and the number of prior-art
//! citations the focal node makes. Treated pairs are matched to control
//! pairs sharing all six stratum fields.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CitationGraph, NodeIdx};
use crate::stats::RunningMoments;

/// Closed integer interval `[lo, hi]`; `hi = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bin {
    pub lo: u32,
    pub hi: Option<u32>,
}

impl Bin {
    const fn closed(lo: u32, hi: u32) -> Bin {
        Bin { lo, hi: Some(hi) }
    }

    const fn open(lo: u32) -> Bin {
        Bin { lo, hi: None }
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.lo && self.hi.is_none_or(|hi| v <= hi)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            None => write!(f, "{}+", self.lo),
            Some(hi) if hi == self.lo => write!(f, "{}", self.lo),
            Some(hi) => write!(f, "{}-{}", self.lo, hi),
        }
    }
}

pub const SEPARATION_BINS: [Bin; 10] = [
    Bin::closed(0, 2),
    Bin::closed(3, 3),
    Bin::closed(4, 4),
    Bin::closed(5, 5),
    Bin::closed(6, 6),
    Bin::closed(7, 7),
    Bin::closed(8, 8),
    Bin::closed(9, 10),
    Bin::closed(11, 12),
    Bin::open(13),
];

pub const RECENT_CITES_BINS: [Bin; 10] = [
    Bin::closed(1, 1),
    Bin::closed(2, 2),
    Bin::closed(3, 3),
    Bin::closed(4, 4),
    Bin::closed(5, 5),
    Bin::closed(6, 7),
    Bin::closed(8, 10),
    Bin::closed(11, 16),
    Bin::closed(17, 45),
    Bin::open(46),
];

pub const PRIOR_ART_COUNT_BINS: [Bin; 9] = [
    Bin::closed(1, 1),
    Bin::closed(2, 2),
    Bin::closed(3, 3),
    Bin::closed(4, 4),
    Bin::closed(5, 5),
    Bin::closed(6, 7),
    Bin::closed(8, 10),
    Bin::closed(11, 14),
    Bin::open(15),
];

fn bin_in(bins: &[Bin], what: &'static str, value: i64) -> Result<Bin> {
    if value < 0 {
        return Err(Error::NegativeInput { what, value });
    }
    let v = u32::try_from(value).unwrap_or(u32::MAX);
    bins.iter()
        .copied()
        .find(|b| b.contains(v))
        .ok_or(Error::BelowSupport { what, value })
}

pub fn bin_separation(years: i64) -> Result<Bin> {
    bin_in(&SEPARATION_BINS, "separation_years", years)
}

pub fn bin_recent_cites(count: i64) -> Result<Bin> {
    bin_in(&RECENT_CITES_BINS, "prior_art_recent_cites", count)
}

pub fn bin_prior_art_count(count: i64) -> Result<Bin> {
    bin_in(&PRIOR_ART_COUNT_BINS, "focal_prior_art_count", count)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairRecord {
    pub focal_id: String,
    pub prior_art_id: String,
    pub focal_category: String,
    pub prior_art_category: String,
    pub focal_grant_year: i32,
    pub separation_years: i32,
    pub prior_art_recent_cites: u32,
    pub focal_prior_art_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumKey {
    pub focal_category: String,
    pub prior_art_category: String,
    pub focal_grant_year: i32,
    pub separation_bin: Bin,
    pub recent_cites_bin: Bin,
    pub prior_art_count_bin: Bin,
}

impl PairRecord {
    pub fn stratum(&self) -> Result<StratumKey> {
        Ok(StratumKey {
            focal_category: self.focal_category.clone(),
            prior_art_category: self.prior_art_category.clone(),
            focal_grant_year: self.focal_grant_year,
            separation_bin: bin_separation(self.separation_years.into())?,
            recent_cites_bin: bin_recent_cites(self.prior_art_recent_cites.into())?,
            prior_art_count_bin: bin_prior_art_count(self.focal_prior_art_count.into())?,
        })
    }

    fn key(&self) -> (&str, &str) {
        (&self.focal_id, &self.prior_art_id)
    }
}

/// Number of years, ending with and including the focal grant year, over
/// which citations to the prior art are counted.
pub const RECENT_CITES_YEARS: i32 = 3;

/// Pair attributes for every prior-art citation of `focal`. Pairs are skipped
/// when either node lacks a category, the prior art is a stub, was granted
/// before `min_prior_art_year`, or after the focal node.
pub fn pairs_for_focal(
    graph: &CitationGraph,
    focal: NodeIdx,
    min_prior_art_year: Option<i32>,
) -> Vec<PairRecord> {
    let f = graph.node(focal);
    let Some(focal_category) = f.category.as_ref() else {
        return Vec::new();
    };
    let prior = graph.cited_by(focal);
    let prior_count = prior.len() as u32;
    let window = (f.grant_year - RECENT_CITES_YEARS + 1, f.grant_year);
    prior
        .iter()
        .filter_map(|&p| {
            let node = graph.node(p);
            let category = node.category.as_ref()?;
            if node.is_stub() || min_prior_art_year.is_some_and(|y| node.grant_year < y) {
                return None;
            }
            let separation = f.grant_year - node.grant_year;
            if separation < 0 {
                return None;
            }
            let recent = graph
                .citers_in_years(p, Some(window.0), Some(window.1))
                .count() as u32;
            Some(PairRecord {
                focal_id: f.id.clone(),
                prior_art_id: node.id.clone(),
                focal_category: focal_category.clone(),
                prior_art_category: category.clone(),
                focal_grant_year: f.grant_year,
                separation_years: separation,
                prior_art_recent_cites: recent,
                focal_prior_art_count: prior_count,
            })
        })
        .collect()
}

/// Batch-result attributes needed to pick treated focal nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentCandidate {
    pub focal_id: String,
    pub disruptiveness: f64,
    pub prior_art_count: usize,
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRule {
    pub threshold_sd: f64,
    /// Compute the mean and SD over positive scores only, and require D > 0.
    pub require_positive: bool,
    pub require_prior_art: bool,
    pub require_category: bool,
}

impl Default for TreatmentRule {
    fn default() -> Self {
        TreatmentRule {
            threshold_sd: 1.0,
            require_positive: true,
            require_prior_art: true,
            require_category: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatedSelection {
    pub threshold: f64,
    pub mean: f64,
    pub sd: f64,
    pub focal_ids: Vec<String>,
}

/// Focal nodes scoring more than `threshold_sd` standard deviations above the
/// mean disruptiveness of the reference sample.
pub fn select_treated(
    candidates: &[TreatmentCandidate],
    rule: &TreatmentRule,
) -> Result<TreatedSelection> {
    let reference: RunningMoments = candidates
        .iter()
        .map(|c| c.disruptiveness)
        .filter(|&d| !rule.require_positive || d > 0.0)
        .collect();
    if reference.count() == 0 {
        return Err(Error::EmptyResultSet);
    }
    let mean = reference.mean();
    let sd = if reference.count() > 1 { reference.sd() } else { 0.0 };
    let threshold = mean + rule.threshold_sd * sd;
    let mut focal_ids: Vec<String> = candidates
        .iter()
        .filter(|c| c.disruptiveness > threshold)
        .filter(|c| !rule.require_positive || c.disruptiveness > 0.0)
        .filter(|c| !rule.require_prior_art || c.prior_art_count > 0)
        .filter(|c| !rule.require_category || c.category.is_some())
        .map(|c| c.focal_id.clone())
        .collect();
    if focal_ids.is_empty() {
        return Err(Error::EmptyResultSet);
    }
    focal_ids.sort();
    Ok(TreatedSelection {
        threshold,
        mean,
        sd,
        focal_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchOptions {
    pub seed: u64,
    pub with_replacement: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedPair {
    pub treated: PairRecord,
    pub control: PairRecord,
    pub stratum: StratumKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchOutcome {
    pub matched: Vec<MatchedPair>,
    pub unmatched: Vec<PairRecord>,
    /// Treated pairs whose counts fall below the binning support.
    pub out_of_support: Vec<PairRecord>,
}

impl MatchOutcome {
    /// Treated focal nodes none of whose pairs found a control.
    pub fn unmatched_focals(&self) -> Vec<String> {
        let matched: HashSet<&str> = self.matched.iter().map(|m| m.treated.focal_id.as_str()).collect();
        let mut out: Vec<String> = self
            .unmatched
            .iter()
            .chain(&self.out_of_support)
            .map(|p| p.focal_id.as_str())
            .filter(|f| !matched.contains(f))
            .map(str::to_string)
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Matches each treated pair to a control pair with an identical stratum key.
/// Strata are visited in key order and controls drawn uniformly with a
/// generator seeded from `opts.seed`.
pub fn match_pairs(
    treated: &[PairRecord],
    control_pool: &[PairRecord],
    opts: &MatchOptions,
) -> Result<MatchOutcome> {
    let treated_keys: HashSet<(&str, &str)> = treated.iter().map(PairRecord::key).collect();
    if let Some(c) = control_pool.iter().find(|c| treated_keys.contains(&c.key())) {
        return Err(Error::OverlappingPools {
            focal: c.focal_id.clone(),
            prior_art: c.prior_art_id.clone(),
        });
    }

    let mut strata: BTreeMap<StratumKey, (Vec<&PairRecord>, Vec<&PairRecord>)> = BTreeMap::new();
    let mut out_of_support = Vec::new();
    for t in treated {
        match t.stratum() {
            Ok(k) => strata.entry(k).or_default().0.push(t),
            Err(_) => out_of_support.push(t.clone()),
        }
    }
    for c in control_pool {
        if let Ok(k) = c.stratum() {
            if let Some(entry) = strata.get_mut(&k) {
                entry.1.push(c);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for (key, (mut ts, mut cs)) in strata {
        ts.sort();
        cs.sort();
        if cs.is_empty() {
            unmatched.extend(ts.into_iter().cloned());
            continue;
        }
        if opts.with_replacement {
            for t in ts {
                let c = cs[rng.random_range(0..cs.len())];
                matched.push(MatchedPair {
                    treated: t.clone(),
                    control: c.clone(),
                    stratum: key.clone(),
                });
            }
        } else {
            cs.shuffle(&mut rng);
            let k = ts.len().min(cs.len());
            for (t, c) in ts[..k].iter().zip(&cs[..k]) {
                matched.push(MatchedPair {
                    treated: (*t).clone(),
                    control: (*c).clone(),
                    stratum: key.clone(),
                });
            }
            unmatched.extend(ts[k..].iter().map(|t| (*t).clone()));
        }
    }
    Ok(MatchOutcome {
        matched,
        unmatched,
        out_of_support,
    })
}

/// Flat row of the matched-pairs file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedRow {
    pub treated_focal: String,
    pub treated_prior: String,
    pub control_focal: String,
    pub control_prior: String,
    pub focal_category: String,
    pub prior_art_category: String,
    pub focal_grant_year: i32,
    pub separation_bin: String,
    pub recent_cites_bin: String,
    pub prior_art_count_bin: String,
}

impl From<&MatchedPair> for MatchedRow {
    fn from(m: &MatchedPair) -> Self {
        MatchedRow {
            treated_focal: m.treated.focal_id.clone(),
            treated_prior: m.treated.prior_art_id.clone(),
            control_focal: m.control.focal_id.clone(),
            control_prior: m.control.prior_art_id.clone(),
            focal_category: m.stratum.focal_category.clone(),
            prior_art_category: m.stratum.prior_art_category.clone(),
            focal_grant_year: m.stratum.focal_grant_year,
            separation_bin: m.stratum.separation_bin.label(),
            recent_cites_bin: m.stratum.recent_cites_bin.label(),
            prior_art_count_bin: m.stratum.prior_art_count_bin.label(),
        }
    }
}
