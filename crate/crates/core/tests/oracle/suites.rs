//! Checks shared by the integration tests and the acceptance report. Each
//! returns a one-line summary on success and the first disagreement on
//! failure.

use std::collections::BTreeSet;

use evogit_core::evolution::locality_violations;
use evogit_core::graph::GraphError;
use evogit_core::run::Run;
use evogit_core::vcs::{merge_trees, FileEntry, MergeOutcome, Parent, RepoPath};
use evogit_core::{ComparisonLedger, FileTree, VersionId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;

type Outcome = Result<String, String>;

pub fn partial_order(dags: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = 0usize;
    for k in 0..dags {
        let n = rng.gen_range(1..=64);
        let dag = random_dag(&mut rng, n, [0.0, 0.2, 0.5][k % 3]);
        let g = build(&dag);
        let reach = closure(n, &dag_edges(&dag));
        for a in 0..n {
            for b in 0..n {
                let got = g.precedes(&dag.ids[a], &dag.ids[b]).unwrap();
                if got != reach[a][b] {
                    return Err(format!("dag {k}: precedes({a}, {b}) = {got}, closure says {}", reach[a][b]));
                }
                pairs += 1;
            }
        }
        let depth = longest_depth(&dag);
        let mut want = maximal(&reach);
        want.sort_by(|&x, &y| depth[x].cmp(&depth[y]).then_with(|| dag.ids[x].to_hex().cmp(&dag.ids[y].to_hex())));
        let want: Vec<VersionId> = want.into_iter().map(|i| dag.ids[i].clone()).collect();
        if g.maximal_set() != want {
            return Err(format!("dag {k}: maximal set disagrees with closure"));
        }
        for (i, id) in dag.ids.iter().enumerate() {
            if g.depth(id).unwrap() != depth[i] {
                return Err(format!("dag {k}: depth of node {i} disagrees"));
            }
        }
    }
    Ok(format!("{dags} DAGs, {pairs} ordered pairs"))
}

pub fn lca(queries: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ties = 0usize;
    for q in 0..queries {
        let n = rng.gen_range(2..=48);
        let dag = random_dag(&mut rng, n, 0.5);
        let g = build(&dag);
        let reach = closure(n, &dag_edges(&dag));
        let depth = longest_depth(&dag);
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let want = super::lca(&dag, &reach, &depth, a, b).map(|i| dag.ids[i].clone());
        let got = g.lowest_common_ancestor(&dag.ids[a], &dag.ids[b]).unwrap();
        if got != want {
            return Err(format!("query {q}: lca({a}, {b}) = {got:?}, oracle says {want:?}"));
        }
        if let Some(w) = want {
            let d = depth[dag.ids.iter().position(|x| *x == w).unwrap()];
            let level = (0..n).filter(|&c| reach[c][a] && reach[c][b] && depth[c] == d).count();
            ties += usize::from(level > 1);
        }
    }
    Ok(format!("{queries} queries agree ({ties} resolved by the digest tie-break)"))
}

pub fn ledger(digraphs: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut rejected, mut recorded) = (0usize, 0usize);
    for k in 0..digraphs {
        let n = rng.gen_range(2..=24);
        let ids: Vec<VersionId> = (0..n).map(|_| random_id(&mut rng)).collect();
        let mut ledger = ComparisonLedger::new();
        for id in &ids {
            ledger.register(id.clone());
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for _ in 0..rng.gen_range(0..=3 * n) {
            let (l, w) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let reach = closure(n, &edges);
            let must_reject = l == w || reach[w][l];
            match ledger.record_verdict(&ids[l], &ids[w]) {
                Ok(()) if must_reject => return Err(format!("digraph {k}: cycle-inducing verdict {l}->{w} accepted")),
                Ok(()) => {
                    if !edges.contains(&(l, w)) {
                        edges.push((l, w));
                    }
                    recorded += 1;
                }
                Err(GraphError::VerdictCycle { .. } | GraphError::SelfVerdict(_)) if must_reject => rejected += 1,
                Err(e) => return Err(format!("digraph {k}: verdict {l}->{w} refused: {e}")),
            }
        }
        let reach = closure(n, &edges);
        for a in 0..n {
            for b in 0..n {
                let got = ledger.better_than(&ids[a], &ids[b]).unwrap().is_yes();
                if got != (a != b && reach[b][a]) {
                    return Err(format!("digraph {k}: better_than({a}, {b}) = {got}"));
                }
            }
        }
        ledger.check_invariants().map_err(|e| format!("digraph {k}: {e}"))?;
    }
    if rejected == 0 {
        return Err("no cycle-inducing verdict was attempted".into());
    }
    Ok(format!("{digraphs} digraphs, {recorded} verdicts recorded, {rejected} cycle attempts rejected"))
}

fn path(p: &str) -> RepoPath {
    RepoPath::new(p).unwrap()
}

fn random_lines<R: Rng>(rng: &mut R, tag: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{tag} {i} {:08x}\n", rng.gen::<u32>())).collect()
}

/// Replaces `lines[start..end]` by `with`.
fn splice(lines: &[String], start: usize, end: usize, with: &[String]) -> Vec<String> {
    let mut out = lines[..start].to_vec();
    out.extend_from_slice(with);
    out.extend_from_slice(&lines[end..]);
    out
}

fn tree(files: &[(&str, &[String])]) -> FileTree {
    let mut t = FileTree::new();
    for (p, lines) in files {
        t.insert(path(p), FileEntry::text(&lines.concat()));
    }
    t
}

/// A non-trivial edit of `lines[lo..hi]`: returns (start, end, replacement).
fn edit_within<R: Rng>(rng: &mut R, tag: &str, lo: usize, hi: usize) -> (usize, usize, Vec<String>) {
    let start = rng.gen_range(lo..hi);
    let end = rng.gen_range(start..=hi);
    let added = if end == start { rng.gen_range(1..=3) } else { rng.gen_range(0..=3) };
    (start, end, random_lines(rng, tag, added))
}

/// (base, first, second, expected merge) with edits that touch disjoint
/// lines or files.
fn disjoint_fixture<R: Rng>(rng: &mut R, kind: usize) -> (FileTree, FileTree, FileTree, FileTree) {
    let n = rng.gen_range(8..=40);
    let base = random_lines(rng, "base", n);
    let m = rng.gen_range(3..=12);
    let other = random_lines(rng, "other", m);
    match kind {
        // One file; first edits above a kept line, second below it.
        0 | 3 => {
            let keep = rng.gen_range(1..n - 1);
            let (s1, e1, r1) = edit_within(rng, "first", 0, keep);
            let (s2, e2, r2) = if kind == 3 {
                (keep + 1, n.min(keep + 1 + rng.gen_range(1..=3)), Vec::new())
            } else {
                edit_within(rng, "second", keep + 1, n)
            };
            let x = splice(&base, s1, e1, &r1);
            let y = splice(&base, s2, e2, &r2);
            let both = splice(&splice(&base, s2, e2, &r2), s1, e1, &r1);
            (
                tree(&[("src/a.txt", &base)]),
                tree(&[("src/a.txt", &x)]),
                tree(&[("src/a.txt", &y)]),
                tree(&[("src/a.txt", &both)]),
            )
        }
        // Different files.
        1 => {
            let (s1, e1, r1) = edit_within(rng, "first", 0, n);
            let m = other.len();
            let (s2, e2, r2) = edit_within(rng, "second", 0, m);
            let x = splice(&base, s1, e1, &r1);
            let y = splice(&other, s2, e2, &r2);
            (
                tree(&[("src/a.txt", &base), ("lib/b.txt", &other)]),
                tree(&[("src/a.txt", &x), ("lib/b.txt", &other)]),
                tree(&[("src/a.txt", &base), ("lib/b.txt", &y)]),
                tree(&[("src/a.txt", &x), ("lib/b.txt", &y)]),
            )
        }
        // First creates a file, second edits an existing one.
        _ => {
            let (s2, e2, r2) = edit_within(rng, "second", 0, n);
            let y = splice(&base, s2, e2, &r2);
            (
                tree(&[("src/a.txt", &base)]),
                tree(&[("src/a.txt", &base), ("src/new.txt", &other)]),
                tree(&[("src/a.txt", &y)]),
                tree(&[("src/a.txt", &y), ("src/new.txt", &other)]),
            )
        }
    }
}

pub fn merge_disjoint(fixtures: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..fixtures {
        let (base, x, y, want) = disjoint_fixture(&mut rng, k % 4);
        for (label, out) in [("first/second", merge_trees(&base, &x, &y, k as u64)), ("second/first", merge_trees(&base, &y, &x, k as u64))] {
            if !out.clean || out.merged != want {
                return Err(format!("fixture {k} ({label}): clean={} conflicts={}", out.clean, out.conflicts.len()));
            }
        }
    }
    Ok(format!("{fixtures} fixture pairs merged byte-exact, both orders"))
}

fn single_conflict() -> (FileTree, FileTree, FileTree, FileTree, FileTree) {
    let base: Vec<String> = (1..=20).map(|i| format!("line {i}\n")).collect();
    let x = splice(&base, 9, 10, &["first says hello\n".to_owned()]);
    let y = splice(&base, 9, 10, &["second says goodbye\n".to_owned()]);
    let t = |l: &[String]| tree(&[("src/a.txt", l)]);
    (t(&base), t(&x), t(&y), t(&x), t(&y))
}

pub fn merge_frequency(seeds: u64) -> Outcome {
    let (base, x, y, want_x, want_y) = single_conflict();
    let mut first = 0u64;
    for seed in 0..seeds {
        let out = merge_trees(&base, &x, &y, seed);
        let [c] = out.conflicts.as_slice() else {
            return Err(format!("seed {seed}: {} conflicts, expected 1", out.conflicts.len()));
        };
        let want = match c.chosen_parent {
            Parent::First => {
                first += 1;
                &want_x
            }
            Parent::Second => &want_y,
        };
        if out.merged != *want || out.clean {
            return Err(format!("seed {seed}: merged tree is not the chosen parent's region"));
        }
    }
    let freq = first as f64 / seeds as f64;
    let expected = seeds as f64 / 2.0;
    let stat = ((first as f64 - expected).powi(2) + ((seeds - first) as f64 - expected).powi(2)) / expected;
    let p = ChiSquared::new(1.0).unwrap().sf(stat);
    let msg = format!("parent 1 chosen {first}/{seeds} = {freq:.3}, chi-square p = {p:.3}");
    if (freq - 0.5).abs() > 0.05 || p <= 0.01 {
        return Err(msg);
    }
    Ok(msg)
}

pub fn merge_repeat(repeats: usize) -> Outcome {
    let base: Vec<String> = (1..=30).map(|i| format!("line {i}\n")).collect();
    let x = splice(&splice(&base, 20, 22, &["x tail\n".into()]), 3, 4, &["x head\n".into()]);
    let y = splice(&splice(&base, 20, 21, &["y tail\n".into(), "y more\n".into()]), 3, 4, &["y head\n".into()]);
    let mut tb = tree(&[("a.txt", &base), ("b.txt", &base)]);
    let mut tx = tree(&[("a.txt", &x), ("b.txt", &y)]);
    let mut ty = tree(&[("a.txt", &y), ("b.txt", &x)]);
    tb.insert(path("logo.bin"), FileEntry::bytes(vec![0, 1, 2]));
    tx.insert(path("logo.bin"), FileEntry::bytes(vec![0, 9, 9]));
    ty.insert(path("logo.bin"), FileEntry::bytes(vec![0, 7, 7]));
    let first: MergeOutcome = merge_trees(&tb, &tx, &ty, 0x5eed);
    if first.conflicts.len() != 5 {
        return Err(format!("expected 5 conflicts, got {}", first.conflicts.len()));
    }
    for r in 1..repeats {
        if merge_trees(&tb, &tx, &ty, 0x5eed) != first {
            return Err(format!("repeat {r} differs"));
        }
    }
    Ok(format!("{repeats} repeats identical ({} conflicts)", first.conflicts.len()))
}

/// Every single-parent version differs from its parent in one file and at
/// most 128 original lines, by an LCS count independent of the differ.
pub fn locality(run: &Run) -> Outcome {
    let graph = run.graph_snapshot();
    let store = run.store();
    let mut checked = 0usize;
    for id in graph.versions() {
        let parents = graph.parents(id).unwrap();
        if parents.len() != 1 {
            continue;
        }
        let (before, after) = (store.read_tree(&parents[0]).unwrap(), store.read_tree(id).unwrap());
        let paths: BTreeSet<&RepoPath> = before.paths().chain(after.paths()).collect();
        let changed: Vec<&RepoPath> = paths.into_iter().filter(|p| before.get(p) != after.get(p)).collect();
        let [p] = changed.as_slice() else {
            return Err(format!("{id}: {} files changed", changed.len()));
        };
        let old = before.get(p).and_then(FileEntry::as_text).unwrap_or("");
        let new = after.get(p).and_then(FileEntry::as_text).unwrap_or("");
        let (old, new) = (lines(old), lines(new));
        let affected = old.len() - lcs_len(&old, &new);
        if affected > 128 {
            return Err(format!("{id}: {affected} original lines affected"));
        }
        checked += 1;
    }
    let audit = locality_violations(store, &graph).map_err(|e| e.to_string())?;
    if !audit.is_empty() {
        return Err(format!("built-in audit reports {} violations", audit.len()));
    }
    Ok(format!("{checked} single-parent commits, 0 violations"))
}
