//! Causal structure learning: constraint-based (PC), score-based greedy
//! search (BIC, optionally with an edge-count penalty), ICA-LiNGAM, and
//! tools to evaluate, compare and export graphs.

mod compare;
mod evaluate;
mod export;
mod lingam;
mod pc;
mod score;
mod search;

pub use compare::{graph_compare, GraphComparison};
pub use evaluate::{
    evaluate_hypothesis_graph, markov_tests, triangles, CheckKind, TestDetail, ViolationReport,
};
pub use export::{export_graph, parse_graph_json, AnyGraph, GraphFormat, GraphJson, ParsedGraph};
pub use lingam::{fast_ica, ica_lingam, ica_lingam_with, IcaResult, LingamConfig};
pub use pc::{pc_discover, pc_skeleton, PcSkeleton};
pub use score::{bic_score, BicScorer};
pub use search::{ges_discover, grasp_discover, greedy_search, SearchTrace};

use thiserror::Error;

use crate::data::DataError;
use crate::graph::GraphError;
use crate::stats::StatsError;

/// Default maximum conditioning-set size for PC.
pub const DEFAULT_MAX_COND_SIZE: usize = 4;
/// Default LiNGAM pruning threshold on weight magnitude.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("too few samples: {n} rows for {p} variables")]
    TooFewSamples { n: usize, p: usize },
    #[error("singular regression for node {0}")]
    SingularRegression(String),
    #[error("ICA did not converge in {0} iterations")]
    IcaNonConvergence(usize),
    #[error("node sets differ")]
    NodeMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("graph parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
}
