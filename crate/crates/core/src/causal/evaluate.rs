use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::data::NumericDataset;
use crate::graph::Dag;
use crate::stats::{CiResult, CiTester};

/// Minimum number of relabelled graphs for the permutation p-values.
pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Markov,
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDetail {
    pub kind: CheckKind,
    pub x: String,
    pub y: String,
    pub given: Vec<String>,
    pub result: CiResult,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub markov_violation_fraction: f64,
    pub triangle_violation_fraction: f64,
    pub markov_tests: usize,
    pub triangle_tests: usize,
    pub markov_p: f64,
    pub triangle_p: f64,
    pub n_permutations: usize,
    pub per_test_detail: Vec<TestDetail>,
}

/// Local Markov implications: `(v, u, pa(v))` for every `u` that is neither
/// `v`, a parent of `v`, nor a descendant of `v`.
pub fn markov_tests(dag: &Dag) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for v in 0..dag.n_nodes() {
        let pa = dag.parents(v);
        let desc = dag.descendants(v);
        for u in 0..dag.n_nodes() {
            if u != v && !pa.contains(&u) && !desc.contains(&u) {
                out.push((v, u, pa.clone()));
            }
        }
    }
    out
}

/// Directed triangles `(x, y, z)` with `x -> y -> z` and `x -> z`.
pub fn triangles(dag: &Dag) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (x, z) in dag.edges() {
        for y in dag.children(x) {
            if dag.has_edge(y, z) {
                out.push((x, y, z));
            }
        }
    }
    out
}

struct Checked {
    markov: (usize, usize),
    triangle: (usize, usize),
    details: Vec<TestDetail>,
}

fn check(dag: &Dag, tester: &CiTester, keep_details: bool) -> Result<Checked, CausalError> {
    let names = dag.nodes();
    let mut details = Vec::new();
    let mut markov = (0, 0);
    for (v, u, pa) in markov_tests(dag) {
        let res = tester.test(v, u, &pa)?;
        let violated = !res.independent;
        markov.0 += violated as usize;
        markov.1 += 1;
        if keep_details {
            details.push(TestDetail {
                kind: CheckKind::Markov,
                x: names[v].clone(),
                y: names[u].clone(),
                given: res.cond_set.clone(),
                result: res,
                violated,
            });
        }
    }
    let mut triangle = (0, 0);
    for (x, y, z) in triangles(dag) {
        let marginal = tester.test(x, z, &[])?;
        let conditional = tester.test(x, z, &[y])?;
        // Both the edge x -> z and the path through y imply dependence.
        let violated = marginal.independent || conditional.independent;
        triangle.0 += violated as usize;
        triangle.1 += 1;
        if keep_details {
            for res in [marginal, conditional] {
                details.push(TestDetail {
                    kind: CheckKind::Triangle,
                    x: names[x].clone(),
                    y: names[z].clone(),
                    given: res.cond_set.clone(),
                    violated: res.independent,
                    result: res,
                });
            }
        }
    }
    Ok(Checked { markov, triangle, details })
}

fn fraction((bad, total): (usize, usize)) -> f64 {
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Tests the independences implied by a hypothesized DAG and compares the
/// violation fractions against `n_permutations` copies with shuffled node
/// labels. A p-value is the fraction of copies doing at least as well.
pub fn evaluate_hypothesis_graph(
    dag: &Dag,
    ds: &NumericDataset,
    alpha: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<ViolationReport, CausalError> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(CausalError::InvalidArgument(format!(
            "n_permutations must be at least {MIN_PERMUTATIONS}"
        )));
    }
    let sub = ds.select_columns(dag.nodes())?;
    let tester = CiTester::new(&sub, alpha);
    let observed = check(dag, &tester, true)?;
    let (m_obs, t_obs) = (fraction(observed.markov), fraction(observed.triangle));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..n_permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..dag.n_nodes()).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let null: Vec<(f64, f64)> = perms
        .par_iter()
        .map(|perm| {
            let c = check(&dag.relabelled(perm), &tester, false)?;
            Ok((fraction(c.markov), fraction(c.triangle)))
        })
        .collect::<Result<_, CausalError>>()?;
    let np = n_permutations as f64;
    let markov_p = null.iter().filter(|(m, _)| *m <= m_obs).count() as f64 / np;
    let triangle_p = null.iter().filter(|(_, t)| *t <= t_obs).count() as f64 / np;

    Ok(ViolationReport {
        markov_violation_fraction: m_obs,
        triangle_violation_fraction: t_obs,
        markov_tests: observed.markov.1,
        triangle_tests: observed.triangle.1,
        markov_p,
        triangle_p,
        n_permutations,
        per_test_detail: observed.details,
    })
}
