//! Brute-force reference implementations. Deliberately naive: dense
//! matrices, Floyd–Warshall closure and exhaustive scans.

#![allow(dead_code)]

pub mod suites;

use evogit_core::{PhyloGraph, VersionId};
use rand::Rng;

/// A rooted DAG by parent lists; node 0 is the root and parents always
/// precede their children.
#[derive(Debug, Clone)]
pub struct Dag {
    pub ids: Vec<VersionId>,
    pub parents: Vec<Vec<usize>>,
}

pub fn random_id<R: Rng>(rng: &mut R) -> VersionId {
    let mut d = [0u8; 20];
    rng.fill(&mut d);
    VersionId::from_digest(&d).unwrap()
}

/// `merge_rate` is the chance that a node (after the second) has two
/// parents.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, merge_rate: f64) -> Dag {
    let ids: Vec<VersionId> = (0..n).map(|_| random_id(rng)).collect();
    let mut parents = vec![Vec::new()];
    for i in 1..n {
        let a = rng.gen_range(0..i);
        if i >= 2 && rng.gen_bool(merge_rate) {
            let mut b = rng.gen_range(0..i - 1);
            if b >= a {
                b += 1;
            }
            parents.push(vec![a, b]);
        } else {
            parents.push(vec![a]);
        }
    }
    Dag { ids, parents }
}

pub fn build(dag: &Dag) -> PhyloGraph {
    let mut g = PhyloGraph::with_root(dag.ids[0].clone());
    for i in 1..dag.ids.len() {
        let ps: Vec<VersionId> = dag.parents[i].iter().map(|&p| dag.ids[p].clone()).collect();
        g.add_child(&ps, dag.ids[i].clone()).unwrap();
    }
    g
}

/// Reflexive-transitive closure of `edges` (from → to) over `n` nodes:
/// `r[a][b]` iff `b` is reachable from `a`.
pub fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

pub fn dag_edges(dag: &Dag) -> Vec<(usize, usize)> {
    dag.parents
        .iter()
        .enumerate()
        .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
        .collect()
}

/// Elements with no strictly greater element.
pub fn maximal(reach: &[Vec<bool>]) -> Vec<usize> {
    let n = reach.len();
    (0..n).filter(|&a| (0..n).all(|b| b == a || !reach[a][b])).collect()
}

/// Longest path from the root, by relaxation until nothing changes.
pub fn longest_depth(dag: &Dag) -> Vec<usize> {
    let n = dag.ids.len();
    let mut depth = vec![0usize; n];
    loop {
        let mut changed = false;
        for c in 0..n {
            for &p in &dag.parents[c] {
                if depth[p] + 1 > depth[c] {
                    depth[c] = depth[p] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            return depth;
        }
    }
}

/// Deepest common ancestor (ancestors include the nodes themselves); ties
/// go to the lexicographically smallest hex digest.
pub fn lca(dag: &Dag, reach: &[Vec<bool>], depth: &[usize], a: usize, b: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for c in 0..dag.ids.len() {
        if !(reach[c][a] && reach[c][b]) {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(x) if depth[c] > depth[x] => Some(c),
            Some(x) if depth[c] == depth[x] && dag.ids[c].to_hex() < dag.ids[x].to_hex() => Some(c),
            keep => keep,
        };
    }
    best
}

/// Length of a longest common subsequence, by the textbook table.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

/// Lines of `text`, each keeping its terminator.
pub fn lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}
