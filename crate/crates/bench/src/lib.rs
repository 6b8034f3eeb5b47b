//! Fixture generators shared by the benchmarks.

use evogit_core::{FileTree, PhyloGraph, VersionId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_id(rng: &mut impl Rng) -> VersionId {
    let digest: [u8; 20] = rng.gen();
    VersionId::from_digest(&digest).expect("non-empty digest")
}

/// A rooted DAG of `n` versions where each new version picks one or (with
/// probability `merge_rate`) two earlier parents.
pub fn random_graph(seed: u64, n: usize, merge_rate: f64) -> (PhyloGraph, Vec<VersionId>) {
    let mut rng = rng(seed);
    let mut g = PhyloGraph::new();
    let mut ids = vec![random_id(&mut rng)];
    g.add_root(ids[0].clone()).expect("fresh root");
    while ids.len() < n {
        let id = random_id(&mut rng);
        let first = rng.gen_range(0..ids.len());
        let mut parents = vec![ids[first].clone()];
        if ids.len() > 1 && rng.gen_bool(merge_rate) {
            let second = rng.gen_range(0..ids.len());
            if second != first {
                parents.push(ids[second].clone());
            }
        }
        if g.add_child(&parents, id.clone()).is_ok() {
            ids.push(id);
        }
    }
    (g, ids)
}

/// `lines` numbered lines, with every `stride`-th line rewritten by `tag`.
pub fn text(lines: usize, stride: usize, tag: &str) -> String {
    (0..lines)
        .map(|i| {
            if stride > 0 && i % stride == 0 {
                format!("line {i} {tag}\n")
            } else {
                format!("line {i}\n")
            }
        })
        .collect()
}

/// A base tree and two descendants editing disjoint files plus a shared
/// file at interleaved lines.
pub fn merge_fixture(files: usize, lines: usize) -> (FileTree, FileTree, FileTree) {
    let mut base = FileTree::new();
    let mut first = FileTree::new();
    let mut second = FileTree::new();
    for f in 0..files {
        let path = format!("src/file{f}.txt");
        let plain = text(lines, 0, "");
        base = base.with_text(&path, &plain).expect("valid path");
        let (a, b) = match f % 3 {
            0 => (text(lines, 7, "first"), plain.clone()),
            1 => (plain.clone(), text(lines, 5, "second")),
            _ => (text(lines, 2, "first"), text(lines, 3, "second")),
        };
        first = first.with_text(&path, &a).expect("valid path");
        second = second.with_text(&path, &b).expect("valid path");
    }
    (base, first, second)
}
