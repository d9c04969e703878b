use std::collections::{BTreeMap, BTreeSet};

use super::CausalError;
use crate::data::NumericDataset;
use crate::graph::PartiallyDirectedGraph;
use crate::stats::CiTester;

/// Skeleton phase result: undirected adjacencies plus the separating set
/// found for every removed pair.
#[derive(Debug, Clone)]
pub struct PcSkeleton {
    pub graph: PartiallyDirectedGraph,
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Adjacency search. Neighbour sets are frozen at the start of every level,
/// which makes the skeleton independent of column order.
pub fn pc_skeleton(
    ds: &NumericDataset,
    alpha: f64,
    max_cond_size: usize,
) -> Result<PcSkeleton, CausalError> {
    let (n, p) = (ds.n_rows(), ds.n_cols());
    if n <= p + 3 {
        return Err(CausalError::TooFewSamples { n, p });
    }
    let tester = CiTester::new(ds, alpha);
    let mut graph = PartiallyDirectedGraph::complete(ds.column_names())?;
    let mut sepsets = BTreeMap::new();
    // Pairs are visited in name order so that ties do not depend on indices.
    let mut by_name: Vec<usize> = (0..p).collect();
    by_name.sort_by(|&a, &b| graph.nodes()[a].cmp(&graph.nodes()[b]));

    for level in 0..=max_cond_size {
        let frozen: Vec<BTreeSet<usize>> = (0..p)
            .map(|v| graph.neighbors(v).into_iter().collect())
            .collect();
        if frozen.iter().all(|a| a.len() <= level) {
            break;
        }
        for &x in &by_name {
            for &y in &by_name {
                if x == y || !graph.has_undirected(x, y) {
                    continue;
                }
                let mut candidates: Vec<usize> =
                    frozen[x].iter().copied().filter(|&v| v != y).collect();
                if candidates.len() < level {
                    continue;
                }
                candidates.sort_by(|&a, &b| graph.nodes()[a].cmp(&graph.nodes()[b]));
                for z in subsets(&candidates, level) {
                    let res = tester.test(x, y, &z)?;
                    if res.independent {
                        graph.remove_adjacency(x, y);
                        let mut s = z.clone();
                        s.sort_unstable();
                        sepsets.insert((x.min(y), x.max(y)), s);
                        break;
                    }
                }
            }
        }
    }
    Ok(PcSkeleton { graph, sepsets })
}

/// PC: skeleton search, v-structure orientation, then Meek rules 1-3.
pub fn pc_discover(
    ds: &NumericDataset,
    alpha: f64,
    max_cond_size: usize,
) -> Result<PartiallyDirectedGraph, CausalError> {
    let PcSkeleton { mut graph, sepsets } = pc_skeleton(ds, alpha, max_cond_size)?;
    let p = graph.nodes().len();

    let mut colliders = Vec::new();
    for z in 0..p {
        let nb = graph.neighbors(z);
        for (i, &x) in nb.iter().enumerate() {
            for &y in &nb[i + 1..] {
                if graph.adjacent(x, y) {
                    continue;
                }
                let sep = sepsets.get(&(x.min(y), x.max(y)));
                if sep.is_some_and(|s| !s.contains(&z)) {
                    colliders.push((x, z, y));
                }
            }
        }
    }
    for (x, z, y) in colliders {
        // Conflicting orientations are left as they are.
        graph.orient(x, z);
        graph.orient(y, z);
    }
    apply_meek_rules(&mut graph);
    Ok(graph)
}

fn apply_meek_rules(g: &mut PartiallyDirectedGraph) {
    let p = g.nodes().len();
    loop {
        let mut changed = false;
        let undirected: Vec<(usize, usize)> = g.undirected().collect();
        for (a, b) in undirected {
            for (u, v) in [(a, b), (b, a)] {
                if !g.has_undirected(u, v) {
                    continue;
                }
                if meek_orients(g, u, v, p) {
                    g.orient(u, v);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether one of Meek's rules forces `u - v` into `u -> v`.
fn meek_orients(g: &PartiallyDirectedGraph, u: usize, v: usize, p: usize) -> bool {
    // R1: w -> u - v with w, v non-adjacent.
    if (0..p).any(|w| g.has_directed(w, u) && !g.adjacent(w, v)) {
        return true;
    }
    // R2: u -> w -> v.
    if (0..p).any(|w| g.has_directed(u, w) && g.has_directed(w, v)) {
        return true;
    }
    // R3: u - c1 -> v, u - c2 -> v, c1 and c2 non-adjacent.
    let cs: Vec<usize> = (0..p)
        .filter(|&c| g.has_undirected(u, c) && g.has_directed(c, v))
        .collect();
    for (i, &c1) in cs.iter().enumerate() {
        for &c2 in &cs[i + 1..] {
            if !g.adjacent(c1, c2) {
                return true;
            }
        }
    }
    false
}
