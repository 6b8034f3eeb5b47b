use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{GraphError, VersionId};

/// Outcome of a transitive "is better than" query.
///
/// Absence of a recorded chain of verdicts is not a negative verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    Yes,
    NoEvidence,
}

impl Evidence {
    pub fn is_yes(self) -> bool {
        self == Evidence::Yes
    }
}

/// One direct judgment: `winner` was found to improve on `loser`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verdict {
    pub loser: VersionId,
    pub winner: VersionId,
}

/// Directed "is-improved-by" relation recorded from direct judgments.
///
/// Edges point from loser to winner. The relation is kept acyclic: a verdict
/// that would close a cycle is rejected at write time.
#[derive(Debug, Clone, Default)]
pub struct ComparisonLedger {
    slots: HashMap<VersionId, usize>,
    ids: Vec<VersionId>,
    improved_by: Vec<Vec<usize>>,
    verdicts: Vec<Verdict>,
}

impl ComparisonLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes `id` known to the ledger. Registering twice is a no-op.
    pub fn register(&mut self, id: VersionId) {
        if self.slots.contains_key(&id) {
            return;
        }
        self.slots.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.improved_by.push(Vec::new());
    }

    pub fn contains(&self, id: &VersionId) -> bool {
        self.slots.contains_key(id)
    }

    fn slot(&self, id: &VersionId) -> Result<usize, GraphError> {
        self.slots
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownVersion(id.clone()))
    }

    /// Records that `winner` improves on `loser`.
    ///
    /// Re-recording an existing verdict is accepted and stored once.
    pub fn record_verdict(&mut self, loser: &VersionId, winner: &VersionId) -> Result<(), GraphError> {
        let l = self.slot(loser)?;
        let w = self.slot(winner)?;
        if l == w {
            return Err(GraphError::SelfVerdict(loser.clone()));
        }
        if self.improved_by[l].contains(&w) {
            return Ok(());
        }
        // loser -> winner closes a cycle iff loser is already reachable from winner.
        if self.reachable(w, l) {
            return Err(GraphError::VerdictCycle {
                loser: loser.clone(),
                winner: winner.clone(),
            });
        }
        self.improved_by[l].push(w);
        self.verdicts.push(Verdict {
            loser: loser.clone(),
            winner: winner.clone(),
        });
        Ok(())
    }

    /// `Yes` iff `a` is reachable from `b` through recorded verdicts, i.e. a
    /// chain of judgments shows `a` improves on `b`. Self-comparison is neutral.
    pub fn better_than(&self, a: &VersionId, b: &VersionId) -> Result<Evidence, GraphError> {
        let a = self.slot(a)?;
        let b = self.slot(b)?;
        if a == b {
            return Ok(Evidence::NoEvidence);
        }
        Ok(if self.reachable(b, a) {
            Evidence::Yes
        } else {
            Evidence::NoEvidence
        })
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.ids.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            for &next in &self.improved_by[n] {
                if next == to {
                    return true;
                }
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    /// Verdicts in the order they were recorded.
    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    /// Re-checks the stored relation: no self pairs, no cycles.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let n = self.ids.len();
        let mut indegree = vec![0usize; n];
        for (l, winners) in self.improved_by.iter().enumerate() {
            for &w in winners {
                if w == l {
                    return Err(GraphError::SelfVerdict(self.ids[l].clone()));
                }
                indegree[w] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(n) = ready.pop() {
            visited += 1;
            for &w in &self.improved_by[n] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(w);
                }
            }
        }
        if visited != n {
            return Err(GraphError::Invariant("verdict relation contains a cycle".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<VersionId> {
        (0..n)
            .map(|i| VersionId::from_digest(&[i as u8 + 1]).unwrap())
            .collect()
    }

    fn ledger(n: usize) -> (ComparisonLedger, Vec<VersionId>) {
        let v = ids(n);
        let mut l = ComparisonLedger::new();
        for id in &v {
            l.register(id.clone());
        }
        (l, v)
    }

    #[test]
    fn direct_verdict() {
        let (mut l, v) = ledger(2);
        l.record_verdict(&v[0], &v[1]).unwrap();
        assert_eq!(l.better_than(&v[1], &v[0]).unwrap(), Evidence::Yes);
        assert_eq!(l.better_than(&v[0], &v[1]).unwrap(), Evidence::NoEvidence);
    }

    #[test]
    fn transitive_inference() {
        let (mut l, v) = ledger(3);
        l.record_verdict(&v[0], &v[1]).unwrap();
        l.record_verdict(&v[1], &v[2]).unwrap();
        assert_eq!(l.better_than(&v[2], &v[0]).unwrap(), Evidence::Yes);
    }

    #[test]
    fn ten_step_chain() {
        let (mut l, v) = ledger(11);
        for w in v.windows(2) {
            l.record_verdict(&w[0], &w[1]).unwrap();
        }
        assert!(l.better_than(&v[10], &v[0]).unwrap().is_yes());
        assert!(!l.better_than(&v[0], &v[10]).unwrap().is_yes());
    }

    #[test]
    fn self_comparison_is_neutral() {
        let (l, v) = ledger(1);
        assert_eq!(l.better_than(&v[0], &v[0]).unwrap(), Evidence::NoEvidence);
    }

    #[test]
    fn rejects_self_verdict_and_cycles() {
        let (mut l, v) = ledger(3);
        assert!(matches!(l.record_verdict(&v[0], &v[0]), Err(GraphError::SelfVerdict(_))));
        l.record_verdict(&v[0], &v[1]).unwrap();
        assert!(matches!(
            l.record_verdict(&v[1], &v[0]),
            Err(GraphError::VerdictCycle { .. })
        ));
        l.record_verdict(&v[1], &v[2]).unwrap();
        assert!(matches!(
            l.record_verdict(&v[2], &v[0]),
            Err(GraphError::VerdictCycle { .. })
        ));
        assert_eq!(l.len(), 2);
        l.check_invariants().unwrap();
    }

    #[test]
    fn duplicate_verdict_stored_once() {
        let (mut l, v) = ledger(2);
        l.record_verdict(&v[0], &v[1]).unwrap();
        l.record_verdict(&v[0], &v[1]).unwrap();
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn unknown_ids() {
        let (mut l, v) = ledger(1);
        let stranger = VersionId::from_hex("ff00").unwrap();
        assert!(matches!(
            l.record_verdict(&v[0], &stranger),
            Err(GraphError::UnknownVersion(_))
        ));
        assert!(l.better_than(&stranger, &v[0]).is_err());
    }

    #[test]
    fn incomparable_siblings_have_no_evidence() {
        let (mut l, v) = ledger(3);
        l.record_verdict(&v[0], &v[1]).unwrap();
        l.record_verdict(&v[0], &v[2]).unwrap();
        assert_eq!(l.better_than(&v[1], &v[2]).unwrap(), Evidence::NoEvidence);
        assert_eq!(l.better_than(&v[2], &v[1]).unwrap(), Evidence::NoEvidence);
    }
}
