use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::graph::{Dag, PartiallyDirectedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphComparison {
    /// Structural Hamming distance: pairs whose edge state differs
    /// (missing, extra, reversed, or directed versus undirected).
    pub shd: usize,
    pub skeleton_precision: f64,
    pub skeleton_recall: f64,
    pub skeleton_f1: f64,
    /// Among true adjacencies that were found, the fraction with the true
    /// direction. Undirected estimates count as wrong.
    pub orientation_accuracy: f64,
    pub true_edges: usize,
    pub estimated_edges: usize,
}

#[derive(PartialEq, Clone, Copy)]
enum Mark {
    None,
    Forward,
    Backward,
    Undirected,
}

fn mark(g: &PartiallyDirectedGraph, a: usize, b: usize) -> Mark {
    if g.has_directed(a, b) {
        Mark::Forward
    } else if g.has_directed(b, a) {
        Mark::Backward
    } else if g.has_undirected(a, b) {
        Mark::Undirected
    } else {
        Mark::None
    }
}

/// Compares an estimated graph against the true DAG on the same node set.
pub fn graph_compare(
    estimated: &PartiallyDirectedGraph,
    truth: &Dag,
) -> Result<GraphComparison, CausalError> {
    let order = truth.nodes();
    if estimated.nodes().len() != order.len() {
        return Err(CausalError::NodeMismatch);
    }
    let map: Vec<usize> = estimated
        .nodes()
        .iter()
        .map(|n| truth.index(n).map_err(|_| CausalError::NodeMismatch))
        .collect::<Result<_, _>>()?;
    let mut est = PartiallyDirectedGraph::new(order.to_vec())?;
    for (a, b) in estimated.directed() {
        est.add_directed(map[a], map[b])?;
    }
    for (a, b) in estimated.undirected() {
        est.add_undirected(map[a], map[b])?;
    }
    let t = PartiallyDirectedGraph::from_dag(truth);

    let p = order.len();
    let (mut shd, mut common, mut oriented) = (0, 0, 0);
    for a in 0..p {
        for b in a + 1..p {
            let (mt, me) = (mark(&t, a, b), mark(&est, a, b));
            if mt != me {
                shd += 1;
            }
            if mt != Mark::None && me != Mark::None {
                common += 1;
                if mt == me {
                    oriented += 1;
                }
            }
        }
    }
    let (nt, ne) = (truth.n_edges(), est.n_edges());
    let ratio = |num: usize, den: usize, empty: f64| if den == 0 { empty } else { num as f64 / den as f64 };
    let precision = ratio(common, ne, if nt == 0 { 1.0 } else { 0.0 });
    let recall = ratio(common, nt, 1.0);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(GraphComparison {
        shd,
        skeleton_precision: precision,
        skeleton_recall: recall,
        skeleton_f1: f1,
        orientation_accuracy: ratio(oriented, common, 0.0),
        true_edges: nt,
        estimated_edges: ne,
    })
}
