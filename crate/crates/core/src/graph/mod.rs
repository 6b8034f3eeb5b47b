//! The phylogenetic graph: a rooted DAG over version identities.
//!
//! Edges run parent to child. The ancestry relation (`precedes`) is the
//! partial order over versions; sinks of the DAG form the frontier. A
//! [`ComparisonLedger`] rides along with the graph and stores the direct
//! judge verdicts that justified each insertion.

mod id;
mod ledger;

use std::collections::HashMap;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use parking_lot::RwLock;
use thiserror::Error;

pub use id::{BinaryIndex, VersionId, INDEX_BITS};
pub use ledger::{ComparisonLedger, Evidence, Verdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("version digest is empty")]
    EmptyDigest,
    #[error("invalid hex digest {0:?}")]
    InvalidHex(String),
    #[error("unknown version {0}")]
    UnknownVersion(VersionId),
    #[error("version {0} is already in the graph")]
    DuplicateVersion(VersionId),
    #[error("graph already has a root")]
    RootExists,
    #[error("graph is empty")]
    Empty,
    #[error("a child needs one or two parents, got {0}")]
    ParentCount(usize),
    #[error("both parents are the same version {0}")]
    IdenticalParents(VersionId),
    #[error("self-verdict on {0}")]
    SelfVerdict(VersionId),
    #[error("verdict {loser} -> {winner} contradicts earlier verdicts")]
    VerdictCycle { loser: VersionId, winner: VersionId },
    #[error("version prefix {0:?} is ambiguous")]
    AmbiguousPrefix(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone)]
struct Node {
    id: VersionId,
    parents: Vec<usize>,
    children: Vec<usize>,
    depth: usize,
    /// Slots of every ancestor, including the node itself.
    ancestors: FixedBitSet,
}

/// Rooted DAG of versions. Insert-only: nodes and edges are never removed;
/// pruned nodes are marked retired instead.
#[derive(Debug, Clone, Default)]
pub struct PhyloGraph {
    nodes: Vec<Node>,
    slots: HashMap<VersionId, usize>,
    retired: FixedBitSet,
    ledger: ComparisonLedger,
}

/// Graph handle shared between the scheduler, workers and the API:
/// queries take the read lock, mutations take the write lock.
pub type SharedGraph = Arc<RwLock<PhyloGraph>>;

impl PhyloGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_root(root: VersionId) -> Self {
        let mut g = Self::new();
        g.add_root(root).expect("empty graph accepts a root");
        g
    }

    pub fn into_shared(self) -> SharedGraph {
        Arc::new(RwLock::new(self))
    }

    pub fn add_root(&mut self, id: VersionId) -> Result<(), GraphError> {
        if !self.nodes.is_empty() {
            return Err(GraphError::RootExists);
        }
        self.push_node(id, Vec::new(), 0);
        Ok(())
    }

    /// Inserts `child` below one or two distinct existing parents.
    pub fn add_child(&mut self, parents: &[VersionId], child: VersionId) -> Result<(), GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        if parents.is_empty() || parents.len() > 2 {
            return Err(GraphError::ParentCount(parents.len()));
        }
        if parents.len() == 2 && parents[0] == parents[1] {
            return Err(GraphError::IdenticalParents(parents[0].clone()));
        }
        let slots = parents
            .iter()
            .map(|p| self.slot(p))
            .collect::<Result<Vec<_>, _>>()?;
        if self.slots.contains_key(&child) {
            return Err(GraphError::DuplicateVersion(child));
        }
        // Parents precede the child in insertion order, so every edge points
        // forward and no cycle can form.
        let depth = slots.iter().map(|&s| self.nodes[s].depth).max().unwrap_or(0) + 1;
        self.push_node(child, slots, depth);
        Ok(())
    }

    fn push_node(&mut self, id: VersionId, parents: Vec<usize>, depth: usize) {
        let slot = self.nodes.len();
        let mut ancestors = FixedBitSet::with_capacity(slot + 1);
        for &p in &parents {
            ancestors.union_with(&self.nodes[p].ancestors);
            self.nodes[p].children.push(slot);
        }
        ancestors.grow(slot + 1);
        ancestors.insert(slot);
        self.slots.insert(id.clone(), slot);
        self.ledger.register(id.clone());
        self.nodes.push(Node {
            id,
            parents,
            children: Vec::new(),
            depth,
            ancestors,
        });
        self.retired.grow(slot + 1);
    }

    fn slot(&self, id: &VersionId) -> Result<usize, GraphError> {
        self.slots
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownVersion(id.clone()))
    }

    pub fn contains(&self, id: &VersionId) -> bool {
        self.slots.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<&VersionId> {
        self.nodes.first().map(|n| &n.id)
    }

    /// Versions in insertion order.
    pub fn versions(&self) -> impl Iterator<Item = &VersionId> + '_ {
        self.nodes.iter().map(|n| &n.id)
    }

    /// Parent → child edges in child insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (&VersionId, &VersionId)> + '_ {
        self.nodes
            .iter()
            .flat_map(move |n| n.parents.iter().map(move |&p| (&self.nodes[p].id, &n.id)))
    }

    pub fn parents(&self, id: &VersionId) -> Result<Vec<VersionId>, GraphError> {
        let s = self.slot(id)?;
        Ok(self.nodes[s].parents.iter().map(|&p| self.nodes[p].id.clone()).collect())
    }

    pub fn children(&self, id: &VersionId) -> Result<Vec<VersionId>, GraphError> {
        let s = self.slot(id)?;
        Ok(self.nodes[s].children.iter().map(|&c| self.nodes[c].id.clone()).collect())
    }

    /// Longest path length from the root.
    pub fn depth(&self, id: &VersionId) -> Result<usize, GraphError> {
        Ok(self.nodes[self.slot(id)?].depth)
    }

    /// `a ⪯ b`: `a` equals `b` or is an ancestor of it.
    pub fn precedes(&self, a: &VersionId, b: &VersionId) -> Result<bool, GraphError> {
        let a = self.slot(a)?;
        let b = self.slot(b)?;
        Ok(self.nodes[b].ancestors.contains(a))
    }

    /// Neither version precedes the other.
    pub fn incomparable(&self, a: &VersionId, b: &VersionId) -> Result<bool, GraphError> {
        Ok(!self.precedes(a, b)? && !self.precedes(b, a)?)
    }

    fn by_depth_then_digest(&self, slots: &mut [usize]) {
        slots.sort_by(|&x, &y| {
            let (x, y) = (&self.nodes[x], &self.nodes[y]);
            x.depth.cmp(&y.depth).then_with(|| x.id.cmp(&y.id))
        });
    }

    /// Maximal elements: versions without descendants, ordered by depth then
    /// digest.
    pub fn maximal_set(&self) -> Vec<VersionId> {
        let mut sinks: Vec<usize> = (0..self.nodes.len())
            .filter(|&s| self.nodes[s].children.is_empty())
            .collect();
        self.by_depth_then_digest(&mut sinks);
        sinks.into_iter().map(|s| self.nodes[s].id.clone()).collect()
    }

    /// The maximal set minus retired versions.
    pub fn active_frontier(&self) -> Vec<VersionId> {
        let mut sinks: Vec<usize> = (0..self.nodes.len())
            .filter(|&s| self.nodes[s].children.is_empty() && !self.retired.contains(s))
            .collect();
        self.by_depth_then_digest(&mut sinks);
        sinks.into_iter().map(|s| self.nodes[s].id.clone()).collect()
    }

    /// Deepest common ancestor of `a` and `b`; among equally deep candidates
    /// the lexicographically smallest digest wins.
    pub fn lowest_common_ancestor(
        &self,
        a: &VersionId,
        b: &VersionId,
    ) -> Result<Option<VersionId>, GraphError> {
        let a = self.slot(a)?;
        let b = self.slot(b)?;
        let mut common = self.nodes[a].ancestors.clone();
        common.intersect_with(&self.nodes[b].ancestors);
        let best = common.ones().min_by(|&x, &y| {
            let (x, y) = (&self.nodes[x], &self.nodes[y]);
            y.depth.cmp(&x.depth).then_with(|| x.id.cmp(&y.id))
        });
        Ok(best.map(|s| self.nodes[s].id.clone()))
    }

    /// Tombstones a version so frontier queries skip it. History is kept.
    pub fn retire(&mut self, id: &VersionId) -> Result<(), GraphError> {
        let s = self.slot(id)?;
        self.retired.insert(s);
        Ok(())
    }

    pub fn is_retired(&self, id: &VersionId) -> Result<bool, GraphError> {
        Ok(self.retired.contains(self.slot(id)?))
    }

    pub fn retired(&self) -> Vec<VersionId> {
        self.retired.ones().map(|s| self.nodes[s].id.clone()).collect()
    }

    pub fn record_verdict(&mut self, loser: &VersionId, winner: &VersionId) -> Result<(), GraphError> {
        self.ledger.record_verdict(loser, winner)
    }

    pub fn better_than(&self, a: &VersionId, b: &VersionId) -> Result<Evidence, GraphError> {
        self.ledger.better_than(a, b)
    }

    pub fn ledger(&self) -> &ComparisonLedger {
        &self.ledger
    }

    /// Resolves a full hex digest or a unique hex prefix.
    pub fn resolve(&self, hex: &str) -> Result<VersionId, GraphError> {
        let needle = hex.to_ascii_lowercase();
        if let Ok(id) = VersionId::from_hex(&needle) {
            if self.contains(&id) {
                return Ok(id);
            }
        }
        if needle.is_empty() || !needle.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(GraphError::InvalidHex(hex.to_owned()));
        }
        let mut found = self.nodes.iter().filter(|n| n.id.to_hex().starts_with(&needle));
        match (found.next(), found.next()) {
            (Some(n), None) => Ok(n.id.clone()),
            (Some(_), Some(_)) => Err(GraphError::AmbiguousPrefix(hex.to_owned())),
            _ => match VersionId::from_hex(&needle) {
                Ok(id) => Err(GraphError::UnknownVersion(id)),
                Err(_) => Err(GraphError::InvalidHex(hex.to_owned())),
            },
        }
    }

    /// Full structural check: single root, 1–2 distinct parents per
    /// non-root node, acyclic, every node reachable from the root, depth is
    /// the longest root path, and the verdict relation is acyclic.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let fail = |msg: String| Err(GraphError::Invariant(msg));
        if self.nodes.is_empty() {
            return Ok(());
        }
        for (s, node) in self.nodes.iter().enumerate() {
            if s == 0 {
                if !node.parents.is_empty() {
                    return fail("root has parents".into());
                }
                continue;
            }
            if node.parents.is_empty() || node.parents.len() > 2 {
                return fail(format!("{} has {} parents", node.id, node.parents.len()));
            }
            if node.parents.len() == 2 && node.parents[0] == node.parents[1] {
                return fail(format!("{} has identical parents", node.id));
            }
            if node.parents.iter().any(|&p| p >= s) {
                return fail(format!("{} has a parent inserted after it", node.id));
            }
            if !node.ancestors.contains(0) {
                return fail(format!("{} is not reachable from the root", node.id));
            }
            let depth = node.parents.iter().map(|&p| self.nodes[p].depth).max().unwrap() + 1;
            if depth != node.depth {
                return fail(format!("{} has depth {} but longest path {}", node.id, node.depth, depth));
            }
        }
        self.ledger.check_invariants()
    }
}
