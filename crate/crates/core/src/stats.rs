//! Descriptive statistics over result tables: moments, Pearson correlations
//! with two-tailed p-values, per-year quantile summaries and histograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::io::read_table;

/// Welford accumulator for mean, variance, min and max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for RunningMoments {
    fn default() -> Self {
        Self::new()
    }
}

impl RunningMoments {
    pub fn new() -> Self {
        RunningMoments {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample variance (denominator `n - 1`).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = RunningMoments::new();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Streaming co-moment accumulator for Pearson's r.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningCovariance {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl RunningCovariance {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    /// `None` when either variable is constant.
    pub fn pearson(&self) -> Option<f64> {
        if self.n < 2 || self.m2_x <= 0.0 || self.m2_y <= 0.0 {
            return None;
        }
        let r = self.c_xy / (self.m2_x.sqrt() * self.m2_y.sqrt());
        Some(r.clamp(-1.0, 1.0))
    }
}

/// Two-tailed p-value for Pearson's r on `n` observations (t with `n - 2` df).
pub fn pearson_p_value(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Significance marker: `***` < 0.001, `**` < 0.01, `*` < 0.05, `+` < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => "+",
        _ => "",
    }
}

/// Linear interpolation between order statistics (R type 7). `sorted` must
/// be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Numeric view of a delimited table. Unparseable cells become NaN;
/// `true`/`false` become 1/0.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_cell(s: &str) -> f64 {
    match s.trim() {
        "true" => 1.0,
        "false" => 0.0,
        other => other.parse().unwrap_or(f64::NAN),
    }
}

impl DataTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        DataTable { columns, rows }
    }

    pub fn from_reader<R: BufRead>(reader: R, delimiter: Option<u8>) -> Result<Self> {
        let (columns, raw) = read_table(reader, delimiter)?;
        let rows = raw
            .iter()
            .map(|r| r.iter().map(|c| parse_cell(c)).collect())
            .collect();
        Ok(DataTable { columns, rows })
    }

    /// Reads JSON lines of flat objects; columns come from the first line.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut columns: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)?;
            if columns.is_empty() {
                columns = obj.keys().cloned().collect();
            }
            rows.push(
                columns
                    .iter()
                    .map(|c| match obj.get(c) {
                        Some(serde_json::Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
                        Some(serde_json::Value::Bool(b)) => f64::from(u8::from(*b)),
                        Some(serde_json::Value::String(s)) => parse_cell(s),
                        _ => f64::NAN,
                    })
                    .collect(),
            );
        }
        Ok(DataTable { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r.get(i).copied().unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub n: usize,
    pub variables: Vec<VariableSummary>,
    /// Square matrix in variable order; `None` where a variable is constant.
    pub correlations: Vec<Vec<Option<Correlation>>>,
    pub warnings: Vec<String>,
}

/// Moments and pairwise correlations for `vars`. Rows with a missing value in
/// any requested variable are dropped.
pub fn summarize(table: &DataTable, vars: &[&str]) -> Result<SummaryTable> {
    if vars.is_empty() {
        return Err(Error::InvalidArgument("no variables requested".into()));
    }
    let idx = vars
        .iter()
        .map(|v| table.column_index(v))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| idx.iter().map(|&i| r.get(i).copied().unwrap_or(f64::NAN)).collect::<Vec<_>>())
        .filter(|r| r.iter().all(|x| x.is_finite()))
        .collect();
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }

    let k = vars.len();
    let mut moments = vec![RunningMoments::new(); k];
    let mut cov = vec![vec![RunningCovariance::default(); k]; k];
    for row in &data {
        for a in 0..k {
            moments[a].push(row[a]);
            for b in (a + 1)..k {
                cov[a][b].push(row[a], row[b]);
            }
        }
    }

    let mut warnings = Vec::new();
    let variables: Vec<VariableSummary> = vars
        .iter()
        .zip(&moments)
        .map(|(name, m)| {
            if m.min() == m.max() {
                warnings.push(format!("`{name}` is constant; its correlations are undefined"));
            }
            VariableSummary {
                name: name.to_string(),
                mean: m.mean(),
                sd: m.sd(),
                min: m.min(),
                max: m.max(),
            }
        })
        .collect();

    let mut correlations = vec![vec![None; k]; k];
    for a in 0..k {
        if moments[a].min() != moments[a].max() {
            correlations[a][a] = Some(Correlation { r: 1.0, p: None });
        }
        for b in (a + 1)..k {
            let c = cov[a][b].pearson().map(|r| Correlation {
                r,
                p: pearson_p_value(r, n),
            });
            correlations[a][b] = c;
            correlations[b][a] = c;
        }
    }

    Ok(SummaryTable {
        n,
        variables,
        correlations,
        warnings,
    })
}

impl SummaryTable {
    /// Aligned text rendering: one line per variable with moments followed by
    /// the lower triangle of the correlation matrix.
    pub fn render_text(&self) -> String {
        let width = self
            .variables
            .iter()
            .map(|v| v.name.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}  {:>10} {:>10} {:>10} {:>10}", "variable", "mean", "sd", "min", "max");
        for j in 0..self.variables.len() {
            let _ = write!(out, " {:>12}", format!("({})", j + 1));
        }
        out.push('\n');
        for (i, v) in self.variables.iter().enumerate() {
            let _ = write!(
                out,
                "{:<width$}  {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                format!("({}) {}", i + 1, v.name),
                v.mean,
                v.sd,
                v.min,
                v.max
            );
            for j in 0..=i {
                let cell = match self.correlations[i][j] {
                    Some(c) if i == j => format!("{:.2}", c.r),
                    Some(c) => format!("{:.2}{}", c.r, c.p.map(significance_stars).unwrap_or("")),
                    None => "NA".to_string(),
                };
                let _ = write!(out, " {cell:>12}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "N = {}", self.n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearDistribution {
    pub year: i64,
    pub n: usize,
    pub mean: f64,
    /// `(probability, value)` pairs in request order.
    pub quantiles: Vec<(f64, f64)>,
}

pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Per-year count, mean and type-7 quantiles of `value`.
pub fn yearly_distribution(
    table: &DataTable,
    value: &str,
    year: &str,
    quantiles: &[f64],
) -> Result<Vec<YearDistribution>> {
    let values = table.column(value)?;
    let years = table.column(year)?;
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (row, (&v, &y)) in values.iter().zip(&years).enumerate() {
        if !y.is_finite() || y.fract() != 0.0 {
            return Err(Error::MalformedRow {
                row: row + 2,
                reason: format!("year variable `{year}` is not an integer"),
            });
        }
        if v.is_finite() {
            groups.entry(y as i64).or_default().push(v);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(year, mut vs)| {
            vs.sort_by(f64::total_cmp);
            let mean = vs.iter().copied().collect::<RunningMoments>().mean();
            YearDistribution {
                year,
                n: vs.len(),
                mean,
                quantiles: quantiles.iter().map(|&p| (p, quantile_sorted(&vs, p))).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[lo, hi]`; the top edge is closed. Values
/// outside the range are ignored.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v.is_finite() && v >= lo && v <= hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[&str], rows: &[&[f64]]) -> DataTable {
        DataTable::new(
            cols.iter().map(|c| c.to_string()).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
    }

    #[test]
    fn perfect_linear_correlation() {
        let t = table(&["x", "y"], &[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let s = summarize(&t, &["x", "y"]).unwrap();
        let c = s.correlations[0][1].unwrap();
        assert!((c.r - 1.0).abs() < 1e-15);
        assert!(c.p.unwrap() < 1e-6);
        assert_eq!(s.correlations[0][0].unwrap().r, 1.0);
        assert_eq!(s.variables[1].mean, 4.0);
        assert_eq!(s.variables[1].sd, 2.0);
    }

    #[test]
    fn constant_variable_reported_missing() {
        let t = table(&["x", "c"], &[&[1.0, 5.0], &[2.0, 5.0], &[3.0, 5.0]]);
        let s = summarize(&t, &["x", "c"]).unwrap();
        assert!(s.correlations[0][1].is_none());
        assert!(s.correlations[1][1].is_none());
        assert_eq!(s.warnings.len(), 1);
        assert!(s.render_text().contains("NA"));
    }

    #[test]
    fn p_value_against_known_value() {
        // r = 0.5, n = 12: t = 0.5 * sqrt(10 / 0.75) = 1.8257, two-tailed p ≈ 0.0980
        let p = pearson_p_value(0.5, 12).unwrap();
        assert!((p - 0.09795).abs() < 1e-4, "{p}");
        assert_eq!(significance_stars(p), "+");
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.5), "");
    }

    #[test]
    fn errors() {
        let t = table(&["x"], &[&[1.0]]);
        assert!(matches!(summarize(&t, &["x"]), Err(Error::TooFewRows { .. })));
        assert!(matches!(summarize(&t, &["nope"]), Err(Error::UnknownVariable(_))));
        assert!(matches!(
            yearly_distribution(&t, "x", "year", &DEFAULT_QUANTILES),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn yearly_single_year() {
        let t = table(&["v", "year"], &[&[0.0, 2000.0], &[0.0, 2000.0], &[1.0, 2000.0], &[0.7, 2001.0]]);
        let d = yearly_distribution(&t, "v", "year", &DEFAULT_QUANTILES).unwrap();
        assert_eq!(d[0].n, 3);
        assert!((d[0].mean - 1.0 / 3.0).abs() < 1e-4);
        assert_eq!(d[0].quantiles[2], (0.5, 0.0));
        assert!(d[1].quantiles.iter().all(|&(_, q)| q == 0.7));
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[-1.0, -0.5, 0.0, 0.5, 1.0, 2.0], -1.0, 1.0, 4);
        let counts: Vec<_> = h.iter().map(|b| b.count).collect();
        assert_eq!(counts, [1, 1, 1, 2]);
    }

    #[test]
    fn reads_csv_with_booleans() {
        let t = DataTable::from_reader("a,is_isolate\n1.5,true\n2,false\n".as_bytes(), None).unwrap();
        assert_eq!(t.rows, vec![vec![1.5, 1.0], vec![2.0, 0.0]]);
        let j = DataTable::from_jsonl("{\"a\":1,\"b\":true}\n{\"a\":2,\"b\":false}\n".as_bytes()).unwrap();
        assert_eq!(j.column("b").unwrap(), [1.0, 0.0]);
    }
}
