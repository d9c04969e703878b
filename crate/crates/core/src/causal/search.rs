use super::score::BicScorer;
use super::CausalError;
use crate::data::NumericDataset;
use crate::graph::Dag;

/// Moves taken by [`greedy_search`], as `(from, to)` names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub additions: Vec<(String, String)>,
    pub deletions: Vec<(String, String)>,
    /// Penalized objective of the returned graph.
    pub objective: f64,
}

/// Greedy search over DAGs maximizing `BIC - lambda * |edges|`: a forward
/// phase adding the single best edge while it improves the objective, then
/// a backward phase removing edges the same way. Candidates are visited in
/// name order and only strict improvements replace the incumbent, so ties
/// go to the lexicographically first move.
pub fn greedy_search(scorer: &BicScorer, lambda: f64) -> Result<(Dag, SearchTrace), CausalError> {
    if !(lambda >= 0.0) {
        return Err(CausalError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let names = scorer.names().to_vec();
    let p = names.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));

    let mut dag = Dag::new(names.clone())?;
    let mut local: Vec<f64> = (0..p).map(|v| scorer.local(v, &[])).collect::<Result<_, _>>()?;
    let mut trace = SearchTrace::default();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &from in &order {
            for &to in &order {
                if from == to || dag.adjacent(from, to) || dag.would_create_cycle(from, to) {
                    continue;
                }
                let mut pa = dag.parents(to);
                pa.push(from);
                let delta = scorer.local(to, &pa)? - local[to] - lambda;
                if best.is_none_or(|(b, _, _)| delta > b) {
                    best = Some((delta, from, to));
                }
            }
        }
        match best {
            Some((delta, from, to)) if delta > 0.0 => {
                dag.add_edge(from, to)?;
                local[to] = scorer.local(to, &dag.parents(to))?;
                trace.additions.push((names[from].clone(), names[to].clone()));
            }
            _ => break,
        }
    }

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        let mut edges: Vec<(usize, usize)> = dag.edges().collect();
        edges.sort_by(|a, b| (&names[a.0], &names[a.1]).cmp(&(&names[b.0], &names[b.1])));
        for (from, to) in edges {
            let pa: Vec<usize> = dag.parents(to).into_iter().filter(|&u| u != from).collect();
            let delta = scorer.local(to, &pa)? - local[to] + lambda;
            if best.is_none_or(|(b, _, _)| delta > b) {
                best = Some((delta, from, to));
            }
        }
        match best {
            Some((delta, from, to)) if delta > 0.0 => {
                dag.remove_edge(from, to);
                local[to] = scorer.local(to, &dag.parents(to))?;
                trace.deletions.push((names[from].clone(), names[to].clone()));
            }
            _ => break,
        }
    }

    trace.objective = local.iter().sum::<f64>() - lambda * dag.n_edges() as f64;
    Ok((dag, trace))
}

/// Score-based search maximizing BIC.
pub fn ges_discover(ds: &NumericDataset) -> Result<Dag, CausalError> {
    let scorer = BicScorer::new(ds)?;
    Ok(greedy_search(&scorer, 0.0)?.0)
}

/// Score-based search with an extra per-edge penalty `lambda`; larger
/// values give sparser graphs and `lambda = 0` coincides with
/// [`ges_discover`].
pub fn grasp_discover(ds: &NumericDataset, lambda: f64) -> Result<Dag, CausalError> {
    let scorer = BicScorer::new(ds)?;
    Ok(greedy_search(&scorer, lambda)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SemEdge, SemSpec};
    use std::collections::BTreeMap;

    fn chain_ds(n: usize, seed: u64) -> NumericDataset {
        let spec = SemSpec {
            nodes: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            edges: vec![
                SemEdge { from: "A".into(), to: "B".into(), weight: 0.8 },
                SemEdge { from: "B".into(), to: "C".into(), weight: -0.7 },
                SemEdge { from: "A".into(), to: "D".into(), weight: 0.6 },
            ],
            noise: BTreeMap::new(),
            discretizers: BTreeMap::new(),
            seed,
        };
        generate_synthetic(&spec, n).unwrap().latent
    }

    #[test]
    fn recovers_skeleton() {
        let ds = chain_ds(3000, 2);
        let dag = ges_discover(&ds).unwrap();
        assert_eq!(dag.skeleton(), [(0, 1), (1, 2), (0, 3)].into_iter().collect());
    }

    #[test]
    fn lambda_zero_equals_ges() {
        let ds = chain_ds(1000, 3);
        assert_eq!(grasp_discover(&ds, 0.0).unwrap(), ges_discover(&ds).unwrap());
    }

    #[test]
    fn edge_count_non_increasing_in_lambda() {
        let ds = chain_ds(300, 4);
        let mut last = usize::MAX;
        for lambda in [0.0, 1.0, 5.0, 20.0, 80.0, 500.0] {
            let e = grasp_discover(&ds, lambda).unwrap().n_edges();
            assert!(e <= last, "lambda {lambda}: {e} > {last}");
            last = e;
        }
        assert_eq!(last, 0);
    }

    #[test]
    fn result_is_local_optimum() {
        let ds = chain_ds(800, 5);
        let scorer = BicScorer::new(&ds).unwrap();
        let (dag, trace) = greedy_search(&scorer, 0.0).unwrap();
        let base = scorer.score(&dag).unwrap();
        assert!((base - trace.objective).abs() < 1e-9 * base.abs());
        for (f, t) in dag.edges().collect::<Vec<_>>() {
            let mut d = dag.clone();
            d.remove_edge(f, t);
            assert!(scorer.score(&d).unwrap() <= base);
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let ds = chain_ds(100, 6);
        assert!(grasp_discover(&ds, -1.0).is_err());
    }
}
