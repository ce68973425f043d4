//! Delimited-text loaders and writers for node and edge tables.
//!
//! Node files need a header with at least `id` and `grant_year`; the optional
//! `application_year` and `category` columns are recognised by name and any
//! further columns are kept as string attributes. Edge files need `citing`
//! and `cited`. Comma or tab delimiters are sniffed from the header line
//! unless given explicitly, and a `.gz` suffix switches on gzip decoding.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CitationEdge, CitationGraph, NodeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DanglingPolicy {
    Reject,
    #[default]
    Drop,
    KeepAsStub,
}

impl std::str::FromStr for DanglingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(DanglingPolicy::Reject),
            "drop" => Ok(DanglingPolicy::Drop),
            "keep-as-stub" | "stub" => Ok(DanglingPolicy::KeepAsStub),
            other => Err(Error::InvalidArgument(format!(
                "unknown dangling-edge policy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeLoad {
    pub edges: Vec<CitationEdge>,
    pub dropped: usize,
    pub duplicates: usize,
    /// Ids referenced by edges but absent from the node table, ascending.
    pub stubs: Vec<String>,
}

/// Opens a file for reading, transparently gunzipping `*.gz`.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    Ok(if gz {
        Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::with_capacity(1 << 16, file))
    })
}

/// Creates a file for writing, gzip-compressing when the name ends in `.gz`.
pub fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    Ok(if gz {
        Box::new(BufWriter::new(GzEncoder::new(file, Compression::default())))
    } else {
        Box::new(BufWriter::new(file))
    })
}

fn sniff_delimiter<R: BufRead>(reader: &mut R) -> Result<u8> {
    let buf = reader.fill_buf()?;
    let line_end = buf.iter().position(|&b| b == b'\n').unwrap_or(buf.len());
    Ok(if buf[..line_end].contains(&b'\t') {
        b'\t'
    } else {
        b','
    })
}

fn csv_reader<R: BufRead>(mut reader: R, delimiter: Option<u8>) -> Result<csv::Reader<R>> {
    let delimiter = match delimiter {
        Some(d) => d,
        None => sniff_delimiter(&mut reader)?,
    };
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader))
}

/// Extracts the calendar year from `1983`, `1983-05-17`, `1983/05/17`,
/// `1983-05-17T00:00:00` or `19830517`.
pub fn parse_year(raw: &str) -> Option<i32> {
    let s = raw.trim();
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    let rest = &s[digits..];
    let ok = match digits {
        4 => rest.is_empty() || rest.starts_with(['-', '/', 'T', ' ', '.']),
        8 => rest.is_empty() || rest.starts_with(['T', ' ']),
        _ => false,
    };
    if ok {
        s[..4].parse().ok()
    } else {
        None
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

/// Reads a node table. Duplicate ids are an error naming the id.
pub fn load_nodes<R: BufRead>(reader: R, delimiter: Option<u8>) -> Result<Vec<NodeRecord>> {
    let mut rdr = csv_reader(reader, delimiter)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let id_col = column(&headers, "id").ok_or_else(|| Error::MissingRequiredColumn("id".into()))?;
    let grant_col = column(&headers, "grant_year")
        .ok_or_else(|| Error::MissingRequiredColumn("grant_year".into()))?;
    let app_col = column(&headers, "application_year");
    let cat_col = column(&headers, "category");
    let extras: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![Some(id_col), Some(grant_col), app_col, cat_col].contains(&Some(*i)))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut seen = HashSet::new();
    let mut nodes = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec?;
        let id = rec.get(id_col).unwrap_or_default();
        if id.is_empty() {
            return Err(Error::malformed(row, "empty id"));
        }
        let grant_raw = rec.get(grant_col).unwrap_or_default();
        let grant_year = parse_year(grant_raw)
            .ok_or_else(|| Error::malformed(row, format!("bad grant_year `{grant_raw}`")))?;
        let application_year = match app_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(raw) => Some(parse_year(raw).ok_or_else(|| {
                Error::malformed(row, format!("bad application_year `{raw}`"))
            })?),
            None => None,
        };
        if application_year.is_some_and(|a| a > grant_year) {
            return Err(Error::malformed(row, "application_year after grant_year"));
        }
        let category = cat_col
            .and_then(|c| rec.get(c))
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        let attributes: BTreeMap<String, String> = extras
            .iter()
            .filter_map(|(c, name)| {
                rec.get(*c)
                    .filter(|v| !v.is_empty())
                    .map(|v| (name.clone(), v.to_string()))
            })
            .collect();
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        nodes.push(NodeRecord {
            id: id.to_string(),
            grant_year,
            application_year,
            category,
            attributes,
        });
    }
    Ok(nodes)
}

/// Reads an edge list, applying `policy` to endpoints missing from `known`.
/// `known` may only be omitted under [`DanglingPolicy::KeepAsStub`], in which
/// case no endpoint is considered dangling.
pub fn load_edges<R: BufRead>(
    reader: R,
    delimiter: Option<u8>,
    known: Option<&[NodeRecord]>,
    policy: DanglingPolicy,
) -> Result<EdgeLoad> {
    if known.is_none() && policy != DanglingPolicy::KeepAsStub {
        return Err(Error::InvalidArgument(
            "node table must be loaded before edges under reject/drop policy".into(),
        ));
    }
    let known: Option<HashSet<&str>> = known.map(|ns| ns.iter().map(|n| n.id.as_str()).collect());

    let mut rdr = csv_reader(reader, delimiter)?;
    let headers = rdr.headers()?.clone();
    let mut out = EdgeLoad::default();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(out);
    }
    let citing_col =
        column(&headers, "citing").ok_or_else(|| Error::MissingRequiredColumn("citing".into()))?;
    let cited_col =
        column(&headers, "cited").ok_or_else(|| Error::MissingRequiredColumn("cited".into()))?;

    let mut seen = HashSet::new();
    let mut stubs = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let citing = rec.get(citing_col).unwrap_or_default();
        let cited = rec.get(cited_col).unwrap_or_default();
        if citing.is_empty() || cited.is_empty() {
            return Err(Error::malformed(row, "empty endpoint"));
        }
        if citing == cited {
            return Err(Error::SelfCitation(citing.to_string(), row));
        }
        if let Some(known) = &known {
            let missing = [citing, cited].into_iter().find(|id| !known.contains(id));
            if let Some(missing) = missing {
                match policy {
                    DanglingPolicy::Reject => {
                        return Err(Error::DanglingEndpoint {
                            citing: citing.into(),
                            cited: cited.into(),
                            missing: missing.into(),
                        })
                    }
                    DanglingPolicy::Drop => {
                        out.dropped += 1;
                        continue;
                    }
                    DanglingPolicy::KeepAsStub => {
                        for id in [citing, cited] {
                            if !known.contains(id) {
                                stubs.insert(id.to_string());
                            }
                        }
                    }
                }
            }
        }
        if !seen.insert((citing.to_string(), cited.to_string())) {
            out.duplicates += 1;
            continue;
        }
        out.edges.push(CitationEdge::new(citing, cited));
    }
    out.stubs = stubs.into_iter().collect();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edges: usize,
    pub dropped_edges: usize,
    pub duplicate_edges: usize,
    pub stub_nodes: usize,
}

/// Loads node and edge files and finalizes the graph.
pub fn load_graph(
    nodes_path: &Path,
    edges_path: &Path,
    delimiter: Option<u8>,
    policy: DanglingPolicy,
) -> Result<(CitationGraph, LoadReport)> {
    let mut nodes = load_nodes(open_input(nodes_path)?, delimiter)?;
    let load = load_edges(open_input(edges_path)?, delimiter, Some(&nodes), policy)?;
    if load.dropped > 0 {
        warn!("dropped {} edges with unknown endpoints", load.dropped);
    }
    let report = LoadReport {
        nodes: nodes.len(),
        edges: load.edges.len(),
        dropped_edges: load.dropped,
        duplicate_edges: load.duplicates,
        stub_nodes: load.stubs.len(),
    };
    nodes.extend(load.stubs.iter().map(NodeRecord::stub));
    let graph = CitationGraph::finalize(nodes, &load.edges)?;
    info!(
        "loaded graph: {} nodes, {} edges ({} dropped, {} duplicate, {} stubs)",
        report.nodes, report.edges, report.dropped_edges, report.duplicate_edges, report.stub_nodes
    );
    Ok((graph, report))
}

/// Writes a node table with a header. Attribute columns are the union of all
/// attribute keys, in key order.
pub fn write_nodes<W: Write>(out: W, nodes: &[NodeRecord]) -> Result<()> {
    let keys: BTreeSet<&str> = nodes
        .iter()
        .flat_map(|n| n.attributes.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id", "grant_year", "application_year", "category"];
    header.extend(keys.iter().copied());
    w.write_record(&header)?;
    for n in nodes {
        let mut rec = vec![
            n.id.clone(),
            n.grant_year.to_string(),
            n.application_year.map(|y| y.to_string()).unwrap_or_default(),
            n.category.clone().unwrap_or_default(),
        ];
        rec.extend(keys.iter().map(|k| n.attributes.get(*k).cloned().unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges<W: Write>(out: W, edges: &[CitationEdge]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["citing", "cited"])?;
    for e in edges {
        w.write_record([&e.citing, &e.cited])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an arbitrary delimited table as header plus string rows.
pub fn read_table<R: BufRead>(reader: R, delimiter: Option<u8>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv_reader(reader, delimiter)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

/// Drains a reader fully; used for digesting input files.
pub fn read_all(mut r: impl Read) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}
