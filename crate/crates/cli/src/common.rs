use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use cdindex::batch::ResultRow;
use cdindex::io::{create_output, load_graph, open_input, read_table};
use cdindex::{CitationGraph, Error, Result, WeightScheme};

use crate::args::Global;

pub fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    program: &'static str,
    version: &'static str,
    command: &'a str,
    argv: &'a [String],
    global: &'a Global,
    parameters: &'a Value,
    seed: u64,
    inputs: Vec<InputDigest>,
}

/// State shared by every subcommand: global flags, the command line, and the
/// input files read so far (digested into the config echo).
pub struct Run {
    pub global: Global,
    pub command: &'static str,
    argv: Vec<String>,
    inputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(global: Global, command: &'static str, argv: Vec<String>) -> Self {
        Run {
            global,
            command,
            argv,
            inputs: Vec::new(),
        }
    }

    /// Records an input for the config echo; fails early, naming the path,
    /// when it cannot be read.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if let Err(e) = std::fs::metadata(path) {
            return Err(Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))));
        }
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
        Ok(())
    }

    pub fn delimiter(&self) -> Result<Option<u8>> {
        let Some(d) = self.global.delimiter.as_deref() else {
            return Ok(None);
        };
        match d {
            "tab" | "\\t" | "\t" => Ok(Some(b'\t')),
            _ if d.len() == 1 && d.is_ascii() => Ok(Some(d.as_bytes()[0])),
            _ => Err(usage(format!("delimiter must be a single ASCII character, got `{d}`"))),
        }
    }

    pub fn load_graph(&mut self) -> Result<CitationGraph> {
        let nodes = self.global.nodes.clone().ok_or_else(|| usage("--nodes is required"))?;
        let edges = self.global.edges.clone().ok_or_else(|| usage("--edges is required"))?;
        self.add_input(&nodes)?;
        self.add_input(&edges)?;
        let (graph, _) = load_graph(&nodes, &edges, self.delimiter()?, self.global.dangling)?;
        Ok(graph)
    }

    pub fn horizon(&self, graph: &CitationGraph) -> Result<i32> {
        match self.global.horizon {
            Some(t) => Ok(t),
            None => graph.year_span().map(|(_, hi)| hi).ok_or(Error::EmptySelection),
        }
    }

    pub fn weights(&mut self) -> Result<WeightScheme> {
        let spec = self.global.weights.clone();
        let scheme = match spec.split_once(':') {
            None if spec == "uniform" => WeightScheme::uniform(),
            None if spec == "age-decay" => WeightScheme::AgeDecay {
                half_life: self.global.half_life,
            },
            Some(("uniform", v)) => WeightScheme::Uniform {
                value: v
                    .parse()
                    .map_err(|_| usage(format!("bad uniform weight `{v}`")))?,
            },
            Some(("table", path)) => {
                let path = PathBuf::from(path);
                self.add_input(&path)?;
                WeightScheme::table(read_weight_table(&path, self.delimiter()?)?)
            }
            _ => return Err(usage(format!("unknown weight scheme `{spec}`"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Primary output: `--out` or standard output.
    pub fn output(&self) -> Result<Box<dyn Write>> {
        match &self.global.out {
            Some(p) => create_output(p),
            None => Ok(Box::new(BufWriter::new(io::stdout()))),
        }
    }

    /// `<out><suffix>` when writing to a file.
    pub fn side_path(&self, suffix: &str) -> Option<PathBuf> {
        self.global.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        })
    }

    /// Human-readable summary line: standard output when results go to a
    /// file, standard error otherwise so piped output stays clean.
    pub fn say(&self, line: impl Display) {
        if self.global.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }

    /// Writes the config echo to `target`, `<out>.config.json`, or standard
    /// error as a single line.
    pub fn echo(&self, parameters: Value, target: Option<PathBuf>) -> Result<()> {
        let inputs = self.inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>>>()?;
        let echo = ConfigEcho {
            program: "cdindex",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: &self.argv,
            global: &self.global,
            parameters: &parameters,
            seed: self.global.seed,
            inputs,
        };
        match target.or_else(|| self.side_path(".config.json")) {
            Some(path) => {
                let mut f = BufWriter::new(File::create(&path)?);
                serde_json::to_writer_pretty(&mut f, &echo)?;
                f.write_all(b"\n")?;
                f.flush()?;
                info!("config echo written to {}", path.display());
            }
            None => eprintln!("config: {}", serde_json::to_string(&echo)?),
        }
        Ok(())
    }
}

fn digest(path: &Path) -> Result<InputDigest> {
    let mut hasher = Sha256::new();
    let bytes = io::copy(&mut File::open(path)?, &mut hasher)?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Reads `id, weight` pairs; falls back to the first two columns when the
/// header names neither.
fn read_weight_table(path: &Path, delimiter: Option<u8>) -> Result<HashMap<String, f64>> {
    let (header, rows) = read_table(open_input(path)?, delimiter)?;
    let col = |name: &str, fallback: usize| header.iter().position(|h| h == name).unwrap_or(fallback);
    let (id_col, w_col) = (col("id", 0), col("weight", 1));
    let mut table = HashMap::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let malformed = |reason: String| Error::MalformedRow { row: i + 2, reason };
        let id = row.get(id_col).ok_or_else(|| malformed("missing id".into()))?;
        let raw = row.get(w_col).ok_or_else(|| malformed("missing weight".into()))?;
        let w: f64 = raw.parse().map_err(|_| malformed(format!("bad weight `{raw}`")))?;
        table.insert(id.clone(), w);
    }
    Ok(table)
}

/// True when the first non-blank byte of the file opens a JSON object.
fn looks_like_jsonl(reader: &mut dyn BufRead) -> Result<bool> {
    let buf = reader.fill_buf()?;
    Ok(buf.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{'))
}

/// Reads a `compute` result file in either output format.
pub fn read_results(path: &Path, delimiter: Option<u8>) -> Result<Vec<ResultRow>> {
    let mut reader = open_input(path)?;
    if looks_like_jsonl(&mut reader)? {
        let mut rows = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line)?;
            // error rows carry only focal_id and error
            if v.get("error").is_none() {
                rows.push(serde_json::from_value(v)?);
            }
        }
        Ok(rows)
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter.unwrap_or(b','))
            .trim(csv::Trim::All)
            .from_reader(reader);
        rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
    }
}

/// Numeric view of a CSV or JSON-lines table.
pub fn read_data_table(path: &Path, delimiter: Option<u8>) -> Result<cdindex::stats::DataTable> {
    let mut reader = open_input(path)?;
    if looks_like_jsonl(&mut reader)? {
        cdindex::stats::DataTable::from_jsonl(reader)
    } else {
        cdindex::stats::DataTable::from_reader(reader, delimiter)
    }
}
