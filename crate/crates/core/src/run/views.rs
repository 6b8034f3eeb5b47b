//! Read-only projections of a run shared by the CLI and the HTTP API, so
//! both emit the same canonical JSON.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::state::RunState;
use super::{Run, RunError};
use crate::diagnostics::SeverityCounts;
use crate::graph::{GraphError, PhyloGraph, VersionId};
use crate::vcs::{BranchName, NotePayload, Operation, MAIN_BRANCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Interior,
    Frontier,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: VersionId,
    pub parents: Vec<VersionId>,
    pub depth: usize,
    pub status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<Operation>,
    /// Branches whose head is this version.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeView {
    pub parent: VersionId,
    pub child: VersionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphView {
    pub root: VersionId,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
}

fn branch_map(state: &RunState) -> HashMap<VersionId, Vec<String>> {
    let mut m: HashMap<VersionId, Vec<String>> = HashMap::new();
    m.entry(state.root().clone()).or_default().push(MAIN_BRANCH.to_owned());
    for (i, h) in state.heads.iter().enumerate() {
        m.entry(h.clone()).or_default().push(BranchName::agent(i).as_str().to_owned());
    }
    m
}

/// Nodes in insertion order; edges parent-major in the same order.
pub fn graph_view(state: &RunState) -> GraphView {
    let g = &state.graph;
    let frontier: std::collections::HashSet<VersionId> = g.active_frontier().into_iter().collect();
    let branches = branch_map(state);
    let nodes: Vec<NodeView> = state
        .order
        .iter()
        .map(|id| {
            let status = if g.is_retired(id).unwrap_or(false) {
                NodeStatus::Retired
            } else if frontier.contains(id) {
                NodeStatus::Frontier
            } else {
                NodeStatus::Interior
            };
            let origin = state.origins.get(id);
            NodeView {
                id: id.clone(),
                parents: g.parents(id).unwrap_or_default(),
                depth: g.depth(id).unwrap_or(0),
                status,
                agent: origin.map(|o| o.agent),
                operation: Some(origin.map_or(Operation::Init, |o| o.operation)),
                branches: branches.get(id).cloned().unwrap_or_default(),
            }
        })
        .collect();
    let edges = nodes
        .iter()
        .flat_map(|n| {
            n.parents.iter().map(move |p| EdgeView {
                parent: p.clone(),
                child: n.id.clone(),
            })
        })
        .collect();
    GraphView {
        root: state.root().clone(),
        nodes,
        edges,
    }
}

/// Graphviz rendering: frontier nodes bold, retired nodes grey.
pub fn export_dot(view: &GraphView) -> String {
    let mut out = String::from("digraph evogit {\n  rankdir=TB;\n  node [shape=box, fontname=monospace];\n");
    for n in &view.nodes {
        let style = match n.status {
            NodeStatus::Frontier => ", style=bold",
            NodeStatus::Retired => ", style=dashed, color=grey",
            NodeStatus::Interior => "",
        };
        let who = n.agent.map_or_else(|| "root".to_owned(), |a| format!("agent-{a}"));
        let _ = writeln!(out, "  \"{}\" [label=\"{}\\n{who}\"{style}];", n.id, n.id.short());
    }
    for e in &view.edges {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", e.parent, e.child);
    }
    out.push_str("}\n");
    out
}

/// Rebuilds a graph from an exported view (tombstones included).
pub fn import_graph(view: &GraphView) -> Result<PhyloGraph, GraphError> {
    let mut g = PhyloGraph::new();
    for n in &view.nodes {
        if n.parents.is_empty() {
            g.add_root(n.id.clone())?;
        } else {
            g.add_child(&n.parents, n.id.clone())?;
            for p in &n.parents {
                g.record_verdict(p, &n.id)?;
            }
        }
        if n.status == NodeStatus::Retired {
            g.retire(&n.id)?;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffStats {
    pub files: usize,
    pub added: usize,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub id: VersionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    pub depth: usize,
    /// Against the first parent; empty for the root.
    pub diff: DiffStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<SeverityCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_excerpt: Option<String>,
}

fn excerpt(note: &NotePayload) -> Option<String> {
    let text = note
        .feedback
        .clone()
        .or_else(|| note.judge.last().map(|j| j.decision.rationale.clone()))
        .or_else(|| note.task_brief.clone())?;
    let mut s: String = text.chars().take(120).collect();
    if s.len() < text.len() {
        s.push('…');
    }
    Some(s)
}

/// The non-retired maximal set, ordered by depth then digest.
pub fn frontier_view(run: &Run) -> Result<Vec<FrontierEntry>, RunError> {
    let (frontier, depths, parents, branches) = {
        let s = run.state();
        let f = s.graph.active_frontier();
        let depths: Vec<usize> = f.iter().map(|v| s.graph.depth(v).unwrap_or(0)).collect();
        let parents: Vec<Vec<VersionId>> = f.iter().map(|v| s.graph.parents(v).unwrap_or_default()).collect();
        (f, depths, parents, branch_map(&s))
    };
    let mut out = Vec::with_capacity(frontier.len());
    for ((id, depth), parents) in frontier.into_iter().zip(depths).zip(parents) {
        let diff = match parents.first() {
            Some(p) => {
                let cs = run.store().diff(p, &id)?;
                DiffStats {
                    files: cs.files.len(),
                    added: cs.files.iter().map(|f| f.added_lines()).sum(),
                    removed: cs.files.iter().map(|f| f.affected_base_lines()).sum(),
                }
            }
            None => DiffStats::default(),
        };
        let note = run.store().read_note(&id)?;
        let branch = branches
            .get(&id)
            .and_then(|b| b.iter().find(|n| n.as_str() != MAIN_BRANCH).or(b.first()))
            .cloned();
        out.push(FrontierEntry {
            branch,
            depth,
            diff,
            diagnostics: note.as_ref().and_then(|n| n.diagnostics.as_ref()).map(|d| d.counts),
            note_excerpt: note.as_ref().and_then(excerpt),
            id,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEntry {
    pub path: String,
    pub bytes: usize,
    /// `None` for binary files.
    pub lines: Option<usize>,
    pub executable: bool,
}

pub fn tree_view(run: &Run, id: &VersionId) -> Result<Vec<TreeEntry>, RunError> {
    let tree = run.store().read_tree(id)?;
    Ok(tree
        .iter()
        .map(|(p, e)| TreeEntry {
            path: p.as_str().to_owned(),
            bytes: e.data().len(),
            lines: e.is_text().then(|| e.line_count()),
            executable: e.executable,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotesView {
    pub id: VersionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<NotePayload>,
    /// Every payload ever attached, oldest first.
    pub history: Vec<NotePayload>,
}

pub fn notes_view(run: &Run, id: &VersionId) -> Result<NotesView, RunError> {
    Ok(NotesView {
        id: id.clone(),
        current: run.store().read_note(id)?,
        history: run.store().note_history(id)?,
    })
}
