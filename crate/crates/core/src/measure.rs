//! Disruptiveness and radicalness of a focal node set.
//!
//! A focal set (size `m`) together with the nodes it cites (its prior art,
//! size `q`) and the later nodes citing either of them (the citers, `n` of
//! them) form a tripartite graph. Each citer `i` gets a focal incidence
//! `f_i` and a prior-art incidence `b_i` and contributes `f_i - 2 f_i b_i`.
//!
//! * Disruptiveness is the mean contribution, in `[-1, 1]`.
//! * Radicalness is the sum of contributions divided by per-citer weights.
//!
//! For a single focal node the incidences are 0/1 indicators ("cites the
//! focal node", "cites any of its prior art"). For larger focal sets the
//! incidences are the fractions of focal nodes and of prior art cited, which
//! keeps disruptiveness in `[-1, 1]`; radicalness then uses the raw cited
//! counts. [`Incidence`] selects between the two forms explicitly.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CitationGraph, NodeIdx, UNKNOWN_YEAR};

/// Which citers are admitted relative to the focal grant year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiterWindow {
    /// Citer grant year must be at least the latest focal grant year.
    #[default]
    PostGrant,
    AllYears,
}

impl std::str::FromStr for CiterWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post" | "post-grant" | "post-grant-only" => Ok(CiterWindow::PostGrant),
            "all" | "all-years" => Ok(CiterWindow::AllYears),
            other => Err(Error::InvalidArgument(format!("unknown citer window `{other}`"))),
        }
    }
}

/// Form of the per-citer incidence values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Incidence {
    /// Indicators for a single focal node, fractions otherwise.
    #[default]
    Auto,
    /// `f_i, b_i ∈ {0, 1}`: cites any focal node / any prior art.
    Indicator,
    /// `f_i = cited focal / m`, `b_i = cited prior art / q` (0 when `q = 0`).
    Fractional,
}

impl Incidence {
    fn resolve(self, m: usize) -> Incidence {
        match self {
            Incidence::Auto if m == 1 => Incidence::Indicator,
            Incidence::Auto => Incidence::Fractional,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightScheme {
    Uniform { value: f64 },
    /// `w_i = 2^((t - grant_year_i) / half_life)`.
    AgeDecay { half_life: f64 },
    CustomTable {
        #[serde(skip)]
        table: Arc<HashMap<String, f64>>,
    },
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::Uniform { value: 1.0 }
    }
}

impl WeightScheme {
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn table(table: HashMap<String, f64>) -> Self {
        WeightScheme::CustomTable {
            table: Arc::new(table),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightScheme::Uniform { value } if !(*value > 0.0 && value.is_finite()) => Err(
                Error::InvalidArgument(format!("uniform weight must be positive, got {value}")),
            ),
            WeightScheme::AgeDecay { half_life } if !(*half_life > 0.0 && half_life.is_finite()) => {
                Err(Error::InvalidArgument(format!(
                    "half-life must be positive, got {half_life}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Weight of `citer` when the measure is evaluated at `horizon`.
    pub fn weight(&self, graph: &CitationGraph, citer: NodeIdx, horizon: i32) -> Result<f64> {
        let w = match self {
            WeightScheme::Uniform { value } => *value,
            WeightScheme::AgeDecay { half_life } => {
                let node = graph.node(citer);
                if node.is_stub() {
                    return Err(Error::MissingWeight(node.id.clone()));
                }
                let age = f64::from(horizon) - f64::from(node.grant_year);
                (age / half_life).exp2()
            }
            WeightScheme::CustomTable { table } => {
                let id = graph.id(citer);
                *table
                    .get(id)
                    .ok_or_else(|| Error::MissingWeight(id.to_string()))?
            }
        };
        if w > 0.0 && w.is_finite() {
            Ok(w)
        } else {
            Err(Error::NonPositiveWeight {
                citer: graph.id(citer).to_string(),
                weight: w,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContextOptions {
    pub horizon: i32,
    pub window: CiterWindow,
    /// Let members of a multi-node focal set count as each other's citers.
    pub include_focal_citers: bool,
}

impl ContextOptions {
    pub fn at(horizon: i32) -> Self {
        ContextOptions {
            horizon,
            ..Default::default()
        }
    }

    pub fn with_window(mut self, window: CiterWindow) -> Self {
        self.window = window;
        self
    }
}

/// One member of the citer class with its raw hit counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CiterRow {
    pub citer: NodeIdx,
    pub grant_year: i32,
    /// Number of focal nodes this citer cites.
    pub focal_hits: u32,
    /// Number of prior-art nodes this citer cites.
    pub prior_hits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocalContext {
    focal: Vec<NodeIdx>,
    prior_art: Vec<NodeIdx>,
    horizon: i32,
    rows: Vec<CiterRow>,
}

impl FocalContext {
    /// Assembles a context from explicit parts. Rows citing neither class
    /// are discarded and the remainder sorted by citer.
    pub fn from_parts(
        mut focal: Vec<NodeIdx>,
        mut prior_art: Vec<NodeIdx>,
        horizon: i32,
        mut rows: Vec<CiterRow>,
    ) -> Result<FocalContext> {
        focal.sort_unstable();
        focal.dedup();
        if focal.is_empty() {
            return Err(Error::EmptyFocalSet);
        }
        prior_art.sort_unstable();
        prior_art.dedup();
        rows.retain(|r| r.focal_hits > 0 || r.prior_hits > 0);
        rows.sort_unstable_by_key(|r| r.citer);
        Ok(FocalContext {
            focal,
            prior_art,
            horizon,
            rows,
        })
    }

    pub fn focal(&self) -> &[NodeIdx] {
        &self.focal
    }

    pub fn prior_art(&self) -> &[NodeIdx] {
        &self.prior_art
    }

    pub fn rows(&self) -> &[CiterRow] {
        &self.rows
    }

    pub fn horizon(&self) -> i32 {
        self.horizon
    }

    pub fn m(&self) -> usize {
        self.focal.len()
    }

    pub fn q(&self) -> usize {
        self.prior_art.len()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// No citers: the measures are undefined and reported as zero.
    pub fn is_isolate(&self) -> bool {
        self.rows.is_empty()
    }

    /// The same context restricted to citers granted no later than `year`.
    pub fn truncated_to(&self, year: i32) -> FocalContext {
        FocalContext {
            focal: self.focal.clone(),
            prior_art: self.prior_art.clone(),
            horizon: year,
            rows: self
                .rows
                .iter()
                .filter(|r| r.grant_year <= year)
                .copied()
                .collect(),
        }
    }

    /// `(f_i, b_i)` for every citer, in citer order.
    pub fn incidences(&self, incidence: Incidence) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mode = incidence.resolve(self.m());
        let m = self.m() as f64;
        let q = self.q() as f64;
        self.rows.iter().map(move |r| match mode {
            Incidence::Fractional => {
                let f = f64::from(r.focal_hits) / m;
                let b = if self.prior_art.is_empty() {
                    0.0
                } else {
                    f64::from(r.prior_hits) / q
                };
                (f, b)
            }
            _ => (
                f64::from(u8::from(r.focal_hits > 0)),
                f64::from(u8::from(r.prior_hits > 0)),
            ),
        })
    }

    /// Citer class counts: (focal only, prior art only, both).
    pub fn class_counts(&self) -> (usize, usize, usize) {
        self.rows
            .iter()
            .fold((0, 0, 0), |(f, b, fb), r| match (r.focal_hits > 0, r.prior_hits > 0) {
                (true, false) => (f + 1, b, fb),
                (false, true) => (f, b + 1, fb),
                _ => (f, b, fb + 1),
            })
    }
}

/// Order-independent summation for the per-citer terms: a pairwise tree
/// whose nodes carry a running compensation term.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    let (sum, comp) = compensated_tree(values);
    sum + comp
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = if a.abs() >= b.abs() { (a - s) + b } else { (b - s) + a };
    (s, err)
}

fn compensated_tree(values: &[f64]) -> (f64, f64) {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        // std's f64 Sum starts at -0.0
        values.iter().fold((0.0, 0.0), |(s, c), &v| {
            let (s, e) = two_sum(s, v);
            (s, c + e)
        })
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        let (s1, c1) = compensated_tree(lo);
        let (s2, c2) = compensated_tree(hi);
        let (s, e) = two_sum(s1, s2);
        (s, c1 + c2 + e)
    }
}

/// Disruptiveness of a context: mean of `f_i - 2 f_i b_i`, zero without citers.
pub fn disruptiveness(ctx: &FocalContext, incidence: Incidence) -> f64 {
    if ctx.is_isolate() {
        return 0.0;
    }
    let terms: Vec<f64> = ctx
        .incidences(incidence)
        .map(|(f, b)| -2.0 * f * b + f)
        .collect();
    pairwise_sum(&terms) / ctx.n() as f64
}

/// Disruptiveness straight from the citer class counts of a single focal
/// node: `(focal_only - both) / n`.
pub fn disruptiveness_from_counts(focal_only: usize, prior_only: usize, both: usize) -> f64 {
    let n = focal_only + prior_only + both;
    if n == 0 {
        return 0.0;
    }
    (focal_only as f64 - both as f64) / n as f64
}

/// Radicalness: `Σ (f_i - 2 f_i b_i) / w_i`. Under fractional incidence the
/// raw cited counts replace the normalized fractions.
pub fn radicalness(
    graph: &CitationGraph,
    ctx: &FocalContext,
    incidence: Incidence,
    weights: &WeightScheme,
) -> Result<f64> {
    let terms = ctx
        .rows
        .iter()
        .zip(ctx.incidences(incidence))
        .map(|(row, (f, b))| {
            let w = weights.weight(graph, row.citer, ctx.horizon)?;
            let numer = match incidence.resolve(ctx.m()) {
                Incidence::Fractional => {
                    let f = f64::from(row.focal_hits);
                    let b = f64::from(row.prior_hits);
                    -2.0 * f * b + f
                }
                _ => -2.0 * f * b + f,
            };
            Ok(numer / w)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// Reusable buffers for building contexts; one per worker thread.
#[derive(Debug, Default)]
pub struct ContextBuilder {
    /// `(citer, grant year, cites prior art)` for every admitted citation
    hits: Vec<(NodeIdx, i32, bool)>,
}

impl ContextBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(
        &mut self,
        graph: &CitationGraph,
        focal: &[NodeIdx],
        opts: &ContextOptions,
    ) -> Result<FocalContext> {
        let mut focal = focal.to_vec();
        focal.sort_unstable();
        focal.dedup();
        if focal.is_empty() {
            return Err(Error::EmptyFocalSet);
        }
        if let Some(&bad) = focal.iter().find(|&&f| f as usize >= graph.node_count()) {
            return Err(Error::UnknownNode(format!("#{bad}")));
        }
        let is_focal = |v: NodeIdx| focal.binary_search(&v).is_ok();

        let mut prior_art: Vec<NodeIdx> = focal
            .iter()
            .flat_map(|&f| graph.cited_by(f).iter().copied())
            .filter(|&p| !is_focal(p))
            .collect();
        prior_art.sort_unstable();
        prior_art.dedup();

        let lo = match opts.window {
            CiterWindow::PostGrant => focal.iter().map(|&f| graph.grant_year(f)).max(),
            CiterWindow::AllYears => None,
        }
        // undated stubs never count as citers
        .unwrap_or(UNKNOWN_YEAR + 1);
        let hi = opts.horizon;
        self.hits.clear();
        for (prior, members) in [(false, &focal), (true, &prior_art)] {
            for &target in members.iter() {
                for &(c, year) in graph.dated_citers(target) {
                    if year < lo || year > hi {
                        continue;
                    }
                    if !opts.include_focal_citers && is_focal(c) {
                        continue;
                    }
                    self.hits.push((c, year, prior));
                }
            }
        }

        self.hits.sort_unstable_by_key(|h| h.0);
        let mut rows: Vec<CiterRow> = Vec::new();
        for &(c, year, prior) in &self.hits {
            let row = match rows.last_mut() {
                Some(r) if r.citer == c => r,
                _ => {
                    rows.push(CiterRow {
                        citer: c,
                        grant_year: year,
                        focal_hits: 0,
                        prior_hits: 0,
                    });
                    rows.last_mut().unwrap()
                }
            };
            if prior {
                row.prior_hits += 1;
            } else {
                row.focal_hits += 1;
            }
        }
        Ok(FocalContext {
            focal,
            prior_art,
            horizon: opts.horizon,
            rows,
        })
    }
}

/// Resolves ids and builds the focal context in one step.
pub fn build_context(
    graph: &CitationGraph,
    focal_ids: &[&str],
    opts: &ContextOptions,
) -> Result<FocalContext> {
    let focal = focal_ids
        .iter()
        .map(|id| graph.resolve(id))
        .collect::<Result<Vec<_>>>()?;
    ContextBuilder::new().build(graph, &focal, opts)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub disruptiveness: f64,
    pub radicalness: f64,
    pub n_citers: usize,
    pub count_focal_only: usize,
    pub count_prior_only: usize,
    pub count_both: usize,
    pub is_isolate: bool,
    pub horizon_year: i32,
    pub focal_size: usize,
    pub prior_art_size: usize,
}

impl MeasureResult {
    /// Disruptiveness rounded to two decimals, for display.
    pub fn disruptiveness_display(&self) -> String {
        format!("{:.2}", self.disruptiveness)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureOptions {
    pub context: ContextOptions,
    pub incidence: Incidence,
    pub weights: WeightScheme,
}

impl MeasureOptions {
    pub fn at(horizon: i32) -> Self {
        MeasureOptions {
            context: ContextOptions::at(horizon),
            ..Default::default()
        }
    }
}

pub fn evaluate(
    graph: &CitationGraph,
    ctx: &FocalContext,
    incidence: Incidence,
    weights: &WeightScheme,
) -> Result<MeasureResult> {
    let (f_only, b_only, both) = ctx.class_counts();
    let is_isolate = ctx.is_isolate();
    let (disruptiveness, radicalness) = if is_isolate {
        (0.0, 0.0)
    } else {
        (
            disruptiveness(ctx, incidence),
            radicalness(graph, ctx, incidence, weights)?,
        )
    };
    Ok(MeasureResult {
        disruptiveness,
        radicalness,
        n_citers: ctx.n(),
        count_focal_only: f_only,
        count_prior_only: b_only,
        count_both: both,
        is_isolate,
        horizon_year: ctx.horizon,
        focal_size: ctx.m(),
        prior_art_size: ctx.q(),
    })
}

/// Single-shot measurement of a focal set given by index.
pub fn measure(
    graph: &CitationGraph,
    builder: &mut ContextBuilder,
    focal: &[NodeIdx],
    opts: &MeasureOptions,
) -> Result<MeasureResult> {
    let ctx = builder.build(graph, focal, &opts.context)?;
    evaluate(graph, &ctx, opts.incidence, &opts.weights)
}

/// Disruptiveness and radicalness at every year in `from_year..=to_year`.
/// `opts.context.horizon` is ignored; each point uses its own year.
pub fn disruptiveness_timeseries(
    graph: &CitationGraph,
    focal: &[NodeIdx],
    from_year: i32,
    to_year: i32,
    opts: &MeasureOptions,
) -> Result<Vec<(i32, MeasureResult)>> {
    if from_year > to_year {
        return Err(Error::InvalidYearRange {
            from: from_year,
            to: to_year,
        });
    }
    let ctx_opts = ContextOptions {
        horizon: to_year,
        ..opts.context
    };
    let full = ContextBuilder::new().build(graph, focal, &ctx_opts)?;
    (from_year..=to_year)
        .map(|year| {
            let ctx = full.truncated_to(year);
            Ok((year, evaluate(graph, &ctx, opts.incidence, &opts.weights)?))
        })
        .collect()
}
