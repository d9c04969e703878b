use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::graph::{Dag, PartiallyDirectedGraph, WeightedDag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    Dot,
}

/// Any of the graph types produced by discovery.
#[derive(Debug, Clone, Copy)]
pub enum AnyGraph<'a> {
    Dag(&'a Dag),
    Pdag(&'a PartiallyDirectedGraph),
    Weighted(&'a WeightedDag),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedGraph {
    Dag(Dag),
    Pdag(PartiallyDirectedGraph),
    Weighted(WeightedDag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedEdgeJson {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndirectedEdgeJson {
    pub a: String,
    pub b: String,
}

/// Interchange format for graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    /// `dag`, `pdag` or `weighted_dag`. Inferred from the edges when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub nodes: Vec<String>,
    #[serde(default)]
    pub directed: Vec<DirectedEdgeJson>,
    #[serde(default)]
    pub undirected: Vec<UndirectedEdgeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_threshold: Option<f64>,
}

impl GraphJson {
    pub fn from_graph(g: AnyGraph<'_>) -> Self {
        let edge = |nodes: &[String], f: usize, t: usize, w: Option<f64>| DirectedEdgeJson {
            from: nodes[f].clone(),
            to: nodes[t].clone(),
            weight: w,
        };
        match g {
            AnyGraph::Dag(d) => Self {
                kind: Some("dag".into()),
                nodes: d.nodes().to_vec(),
                directed: d.edges().map(|(f, t)| edge(d.nodes(), f, t, None)).collect(),
                undirected: Vec::new(),
                prune_threshold: None,
            },
            AnyGraph::Pdag(g) => Self {
                kind: Some("pdag".into()),
                nodes: g.nodes().to_vec(),
                directed: g.directed().map(|(f, t)| edge(g.nodes(), f, t, None)).collect(),
                undirected: g
                    .undirected()
                    .map(|(a, b)| UndirectedEdgeJson {
                        a: g.nodes()[a].clone(),
                        b: g.nodes()[b].clone(),
                    })
                    .collect(),
                prune_threshold: None,
            },
            AnyGraph::Weighted(w) => Self {
                kind: Some("weighted_dag".into()),
                nodes: w.nodes().to_vec(),
                directed: w
                    .weighted_edges()
                    .into_iter()
                    .map(|(f, t, x)| edge(w.nodes(), f, t, Some(x)))
                    .collect(),
                undirected: Vec::new(),
                prune_threshold: Some(w.prune_threshold()),
            },
        }
    }

    pub fn into_graph(self) -> Result<ParsedGraph, CausalError> {
        let kind = match self.kind.as_deref() {
            Some(k) => k.to_string(),
            None if !self.undirected.is_empty() => "pdag".into(),
            None if self.directed.iter().any(|e| e.weight.is_some()) => "weighted_dag".into(),
            None => "dag".into(),
        };
        match kind.as_str() {
            "dag" => {
                if !self.undirected.is_empty() {
                    return Err(CausalError::Parse("dag with undirected edges".into()));
                }
                let edges: Vec<(&str, &str)> =
                    self.directed.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
                Ok(ParsedGraph::Dag(Dag::from_named_edges(self.nodes, &edges)?))
            }
            "pdag" => {
                let mut g = PartiallyDirectedGraph::new(self.nodes)?;
                for e in &self.directed {
                    let (f, t) = (g.index(&e.from)?, g.index(&e.to)?);
                    g.add_directed(f, t)?;
                }
                for e in &self.undirected {
                    let (a, b) = (g.index(&e.a)?, g.index(&e.b)?);
                    g.add_undirected(a, b)?;
                }
                Ok(ParsedGraph::Pdag(g))
            }
            "weighted_dag" => {
                if !self.undirected.is_empty() {
                    return Err(CausalError::Parse("weighted dag with undirected edges".into()));
                }
                let probe = Dag::new(self.nodes.clone())?;
                let p = self.nodes.len();
                let mut b = DMatrix::zeros(p, p);
                for e in &self.directed {
                    let w = e
                        .weight
                        .ok_or_else(|| CausalError::Parse(format!("edge {}->{} has no weight", e.from, e.to)))?;
                    if w == 0.0 {
                        return Err(CausalError::Parse("zero edge weight".into()));
                    }
                    b[(probe.index(&e.to)?, probe.index(&e.from)?)] = w;
                }
                let threshold = self.prune_threshold.unwrap_or(0.0);
                Ok(ParsedGraph::Weighted(WeightedDag::from_matrix(self.nodes, b, threshold)?))
            }
            other => Err(CausalError::Parse(format!("unknown graph kind {other}"))),
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(g: AnyGraph<'_>) -> String {
    let j = GraphJson::from_graph(g);
    let only_undirected = j.directed.is_empty() && !j.undirected.is_empty();
    let (header, arrow) = if only_undirected { ("graph", "--") } else { ("digraph", "->") };
    let mut out = format!("{header} G {{\n");
    for n in &j.nodes {
        out.push_str(&format!("  {};\n", quote(n)));
    }
    for e in &j.directed {
        let attr = e.weight.map(|w| format!(" [label=\"{w:.2}\"]")).unwrap_or_default();
        out.push_str(&format!("  {} -> {}{attr};\n", quote(&e.from), quote(&e.to)));
    }
    for e in &j.undirected {
        // Mixed graphs must stay a digraph; dir=none draws a plain line.
        let attr = if only_undirected { "" } else { " [dir=none]" };
        out.push_str(&format!("  {} {arrow} {}{attr};\n", quote(&e.a), quote(&e.b)));
    }
    out.push_str("}\n");
    out
}

/// Renders a graph as JSON or Graphviz DOT.
pub fn export_graph(g: AnyGraph<'_>, format: GraphFormat) -> String {
    match format {
        GraphFormat::Json => {
            serde_json::to_string_pretty(&GraphJson::from_graph(g)).expect("graph json serializes")
        }
        GraphFormat::Dot => to_dot(g),
    }
}

pub fn parse_graph_json(text: &str) -> Result<ParsedGraph, CausalError> {
    let j: GraphJson = serde_json::from_str(text).map_err(|e| CausalError::Parse(e.to_string()))?;
    j.into_graph()
}
