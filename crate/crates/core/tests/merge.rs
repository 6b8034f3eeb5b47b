mod oracle;

use evogit_core::canonical;
use evogit_core::vcs::{apply_changeset, apply_hunks, diff_lines, diff_trees, merge_trees, ChangeSet, FileEntry, RepoPath};
use evogit_core::FileTree;
use oracle::{lcs_len, suites};
use proptest::prelude::*;

#[test]
fn disjoint_edits_merge_exactly() {
    suites::merge_disjoint(100, 4).unwrap();
}

#[test]
fn conflict_coin_is_fair() {
    suites::merge_frequency(1000).unwrap();
}

#[test]
fn fixed_seed_is_repeatable() {
    suites::merge_repeat(10).unwrap();
}

/// Small alphabet so random texts share many lines.
fn text() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a\n", "b\n", "c\n", "d\n", "\n", "e"]), 0..24)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

fn tree_of(files: Vec<(u8, Vec<String>)>) -> FileTree {
    let mut t = FileTree::new();
    for (k, lines) in files {
        let entry = if k % 5 == 4 {
            FileEntry::bytes(vec![0, k, 0xff])
        } else {
            FileEntry::text(&lines.concat())
        };
        t.insert(RepoPath::new(format!("d{}/f{}.txt", k % 2, k % 4)).unwrap(), entry);
    }
    t
}

fn trees() -> impl Strategy<Value = FileTree> {
    prop::collection::vec((0u8..5, text()), 0..5).prop_map(tree_of)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hunks_roundtrip_and_are_minimal(base in text(), target in text()) {
        let hunks = diff_lines(&base, &target);
        prop_assert_eq!(apply_hunks(&base, &hunks).unwrap(), target.clone());
        let deleted: usize = hunks.iter().map(|h| h.len).sum();
        prop_assert_eq!(deleted, base.len() - lcs_len(&base, &target));
        prop_assert!(hunks.windows(2).all(|w| w[0].end() < w[1].start));
    }

    #[test]
    fn changesets_roundtrip_through_canonical_json(base in trees(), target in trees()) {
        let cs = diff_trees(&base, &target);
        prop_assert_eq!(apply_changeset(&base, &cs).unwrap(), target.clone());
        let json = canonical::to_string(&cs).unwrap();
        let back: ChangeSet = canonical::from_str(&json).unwrap();
        prop_assert_eq!(back, cs);
        prop_assert!(diff_trees(&target, &target).is_empty());
    }

    #[test]
    fn merge_identities(base in trees(), x in trees(), seed in any::<u64>()) {
        let same = merge_trees(&base, &x, &x, seed);
        prop_assert!(same.clean);
        prop_assert_eq!(&same.merged, &x);
        let one_sided = merge_trees(&base, &base, &x, seed);
        prop_assert!(one_sided.clean);
        prop_assert_eq!(&one_sided.merged, &x);
    }

    #[test]
    fn merges_are_deterministic_and_marker_free(base in trees(), x in trees(), y in trees(), seed in any::<u64>()) {
        let out = merge_trees(&base, &x, &y, seed);
        prop_assert_eq!(&out, &merge_trees(&base, &x, &y, seed));
        prop_assert_eq!(out.clean, out.conflicts.is_empty());
        for (_, e) in out.merged.iter() {
            if let Some(t) = e.as_text() {
                prop_assert!(!t.contains("<<<<<<<") && !t.contains(">>>>>>>"));
            }
        }
        // Every merged path exists in some input.
        for p in out.merged.paths() {
            prop_assert!(base.contains(p) || x.contains(p) || y.contains(p));
        }
    }
}
