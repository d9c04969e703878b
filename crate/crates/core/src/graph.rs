//! Graph types shared by the generator, the discovery algorithms and the
//! evaluation code: [`Dag`], [`PartiallyDirectedGraph`] and [`WeightedDag`].
//!
//! Nodes are addressed by index into an ordered name list. Edges are kept in
//! ordered sets so iteration order (and therefore every tie-break built on
//! top of it) is deterministic.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge {from} -> {to} would create a cycle")]
    Cycle { from: String, to: String },
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node sets differ")]
    NodeMismatch,
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("pair {a} - {b} appears in more than one edge set")]
    ConflictingEdge { a: String, b: String },
}

fn index_of(nodes: &[String], name: &str) -> Result<usize, GraphError> {
    nodes
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
}

fn check_unique(nodes: &[String]) -> Result<(), GraphError> {
    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.as_str()) {
            return Err(GraphError::DuplicateNode(n.clone()));
        }
    }
    Ok(())
}

/// Directed acyclic graph. Acyclicity is checked on every insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    pub fn new(nodes: Vec<String>) -> Result<Self, GraphError> {
        check_unique(&nodes)?;
        Ok(Self {
            nodes,
            edges: BTreeSet::new(),
        })
    }

    /// Builds a DAG from named edges, rejecting cycles.
    pub fn from_named_edges<S: AsRef<str>>(
        nodes: Vec<String>,
        edges: &[(S, S)],
    ) -> Result<Self, GraphError> {
        let mut dag = Self::new(nodes)?;
        for (from, to) in edges {
            let f = dag.index(from.as_ref())?;
            let t = dag.index(to.as_ref())?;
            dag.add_edge(f, t)?;
        }
        Ok(dag)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn index(&self, name: &str) -> Result<usize, GraphError> {
        index_of(&self.nodes, name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, t)| t == node)
            .map(|&(f, _)| f)
            .collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges
            .range((node, 0)..(node + 1, 0))
            .map(|&(_, t)| t)
            .collect()
    }

    /// True when `to` reaches `from`, i.e. adding `from -> to` closes a cycle.
    pub fn would_create_cycle(&self, from: usize, to: usize) -> bool {
        from == to || self.reaches(to, from)
    }

    /// Whether a directed path `src -> ... -> dst` exists.
    pub fn reaches(&self, src: usize, dst: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            if v == dst {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.children(v));
        }
        false
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<(), GraphError> {
        if from == to {
            return Err(GraphError::SelfLoop(self.nodes[from].clone()));
        }
        if self.edges.contains(&(from, to)) {
            return Err(GraphError::DuplicateEdge {
                from: self.nodes[from].clone(),
                to: self.nodes[to].clone(),
            });
        }
        if self.would_create_cycle(from, to) {
            return Err(GraphError::Cycle {
                from: self.nodes[from].clone(),
                to: self.nodes[to].clone(),
            });
        }
        self.edges.insert((from, to));
        debug_assert!(self.topological_order().is_some());
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        self.edges.remove(&(from, to))
    }

    /// Kahn's algorithm; ties resolved by lowest index. `None` means a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, t) in &self.edges {
            indeg[t] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// All nodes reachable from `node` (excluding `node`).
    pub fn descendants(&self, node: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<usize> = self.children(node).into();
        while let Some(v) = queue.pop_front() {
            if out.insert(v) {
                queue.extend(self.children(v));
            }
        }
        out
    }

    /// Returns a copy with node names permuted: node `i` is renamed to
    /// `names[perm[i]]`. Structure is unchanged, only labels move.
    pub fn relabelled(&self, perm: &[usize]) -> Dag {
        let mut edges = BTreeSet::new();
        for &(f, t) in &self.edges {
            edges.insert((perm[f], perm[t]));
        }
        Dag {
            nodes: self.nodes.clone(),
            edges,
        }
    }

    /// Reorders the node list to match `order` (same set of names).
    pub fn reindexed(&self, order: &[String]) -> Result<Dag, GraphError> {
        if order.len() != self.nodes.len() {
            return Err(GraphError::NodeMismatch);
        }
        check_unique(order)?;
        let map: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| index_of(order, n))
            .collect::<Result<_, _>>()?;
        Ok(Dag {
            nodes: order.to_vec(),
            edges: self.edges.iter().map(|&(f, t)| (map[f], map[t])).collect(),
        })
    }

    pub fn named_edges(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(f, t)| (self.nodes[f].clone(), self.nodes[t].clone()))
            .collect()
    }

    /// Undirected skeleton as ordered `(min, max)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect()
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .named_edges()
            .into_iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        write!(f, "Dag[{}]", parts.join(", "))
    }
}

/// Graph with both directed and undirected edges (PC output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartiallyDirectedGraph {
    nodes: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

impl PartiallyDirectedGraph {
    pub fn new(nodes: Vec<String>) -> Result<Self, GraphError> {
        check_unique(&nodes)?;
        Ok(Self {
            nodes,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        })
    }

    /// Complete undirected graph over `nodes`.
    pub fn complete(nodes: Vec<String>) -> Result<Self, GraphError> {
        let mut g = Self::new(nodes)?;
        let n = g.nodes.len();
        for a in 0..n {
            for b in a + 1..n {
                g.undirected.insert((a, b));
            }
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn index(&self, name: &str) -> Result<usize, GraphError> {
        index_of(&self.nodes, name)
    }

    pub fn directed(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn undirected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn has_directed(&self, from: usize, to: usize) -> bool {
        self.directed.contains(&(from, to))
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a.min(b), a.max(b)))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_undirected(a, b) || self.has_directed(a, b) || self.has_directed(b, a)
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&u| u != v && self.adjacent(u, v))
            .collect()
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<(), GraphError> {
        self.check_pair(a, b)?;
        if self.has_directed(a, b) || self.has_directed(b, a) {
            return Err(self.conflict(a, b));
        }
        self.undirected.insert((a.min(b), a.max(b)));
        Ok(())
    }

    pub fn add_directed(&mut self, from: usize, to: usize) -> Result<(), GraphError> {
        self.check_pair(from, to)?;
        if self.has_undirected(from, to) || self.has_directed(to, from) {
            return Err(self.conflict(from, to));
        }
        self.directed.insert((from, to));
        Ok(())
    }

    /// Drops any edge between `a` and `b`.
    pub fn remove_adjacency(&mut self, a: usize, b: usize) {
        self.undirected.remove(&(a.min(b), a.max(b)));
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
    }

    /// Turns `a - b` into `a -> b`. Returns false if the pair was not undirected.
    pub fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.undirected.remove(&(a.min(b), a.max(b))) {
            self.directed.insert((a, b));
            true
        } else {
            false
        }
    }

    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.undirected
            .iter()
            .copied()
            .chain(self.directed.iter().map(|&(a, b)| (a.min(b), a.max(b))))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn from_dag(dag: &Dag) -> Self {
        Self {
            nodes: dag.nodes.clone(),
            directed: dag.edges.clone(),
            undirected: BTreeSet::new(),
        }
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(self.nodes[a].clone()));
        }
        Ok(())
    }

    fn conflict(&self, a: usize, b: usize) -> GraphError {
        GraphError::ConflictingEdge {
            a: self.nodes[a].clone(),
            b: self.nodes[b].clone(),
        }
    }
}

/// DAG with a weight matrix `B` where `B[(i, j)]` is the coefficient of the
/// edge `j -> i` (row = child, column = parent).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    dag: Dag,
    weights: DMatrix<f64>,
    prune_threshold: f64,
}

impl WeightedDag {
    /// Builds from a weight matrix; every nonzero entry becomes an edge.
    pub fn from_matrix(
        nodes: Vec<String>,
        weights: DMatrix<f64>,
        prune_threshold: f64,
    ) -> Result<Self, GraphError> {
        let n = nodes.len();
        assert_eq!(weights.shape(), (n, n), "weight matrix must be square");
        let mut dag = Dag::new(nodes)?;
        for child in 0..n {
            for parent in 0..n {
                if weights[(child, parent)] != 0.0 {
                    dag.add_edge(parent, child)?;
                }
            }
        }
        Ok(Self {
            dag,
            weights,
            prune_threshold,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune_threshold
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[(to, from)]
    }

    pub fn nodes(&self) -> &[String] {
        self.dag.nodes()
    }

    /// Weighted edges `(from, to, weight)` in edge order.
    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.dag
            .edges()
            .map(|(f, t)| (f, t, self.weights[(t, f)]))
            .collect()
    }
}
