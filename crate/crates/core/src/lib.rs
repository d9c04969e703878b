//! Core library for CGPA analysis: survey data model, statistics, causal
//! structure discovery, predictors and explanation methods.

// `!(x > 0.0)` is how NaN gets rejected alongside the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal;
pub mod data;
pub mod explain;
pub mod graph;
pub mod predictors;
pub mod report;
pub mod stats;
