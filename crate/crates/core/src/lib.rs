//! Disruptiveness and radicalness of nodes in directed citation networks.
//!
//! The crate loads a citation graph ([`graph`], [`io`]), scores focal nodes
//! or focal sets ([`measure`]) one at a time or in parallel batches
//! ([`batch`]), and carries the validation tooling around the scores:
//! coarsened exact matching of citation pairs ([`cem`]), event-time panels
//! with difference-in-differences and a cluster bootstrap ([`did`]), and
//! descriptive statistics ([`stats`]).

pub mod batch;
pub mod cem;
pub mod did;
pub mod error;
pub mod graph;
pub mod io;
pub mod measure;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use graph::{CitationEdge, CitationGraph, NodeIdx, NodeRecord};
pub use measure::{
    CiterWindow, ContextBuilder, ContextOptions, FocalContext, Incidence, MeasureOptions,
    MeasureResult, WeightScheme,
};
