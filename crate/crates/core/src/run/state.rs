//! In-memory run state, rebuilt by replaying the journal. Live updates go
//! through [`RunState::apply`] as well, so replay and live execution share
//! one code path.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::feedback::FeedbackRecord;
use super::journal::{Event, RetireReason};
use super::RunError;
use crate::graph::{PhyloGraph, VersionId};
use crate::vcs::Operation;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStats {
    pub agent: usize,
    pub mutations: usize,
    pub crossovers: usize,
    pub rejected: usize,
    pub skipped: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSample {
    pub round: usize,
    pub frontier: usize,
    pub live_agents: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub index: usize,
    pub round: usize,
    pub frontier: Vec<VersionId>,
    pub live_agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackRecord>,
}

/// Who created a version, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub agent: usize,
    pub round: usize,
    pub operation: Operation,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub graph: PhyloGraph,
    /// Last version each agent created (the root before its first).
    pub heads: Vec<VersionId>,
    pub failed: BTreeSet<usize>,
    pub stats: Vec<AgentStats>,
    pub rounds: Vec<RoundSample>,
    pub checkpoints: Vec<CheckpointEntry>,
    pub origins: HashMap<VersionId, Origin>,
    /// Journal order of every version, root first.
    pub order: Vec<VersionId>,
    comment_limit: usize,
}

impl RunState {
    pub fn new(agents: usize, comment_limit: usize) -> Self {
        RunState {
            graph: PhyloGraph::new(),
            heads: Vec::new(),
            failed: BTreeSet::new(),
            stats: (0..agents)
                .map(|agent| AgentStats {
                    agent,
                    ..AgentStats::default()
                })
                .collect(),
            rounds: Vec::new(),
            checkpoints: Vec::new(),
            origins: HashMap::new(),
            order: Vec::new(),
            comment_limit,
        }
    }

    pub fn replay(events: &[Event], agents: usize, comment_limit: usize) -> Result<Self, RunError> {
        let mut state = RunState::new(agents, comment_limit);
        for (i, ev) in events.iter().enumerate() {
            state
                .apply(ev)
                .map_err(|e| RunError::Journal(format!("event {}: {e}", i + 1)))?;
        }
        if state.graph.is_empty() {
            return Err(RunError::Journal("journal has no root".into()));
        }
        Ok(state)
    }

    pub fn agents(&self) -> usize {
        self.stats.len()
    }

    pub fn root(&self) -> &VersionId {
        self.graph.root().expect("state always has a root")
    }

    pub fn live_agents(&self) -> usize {
        self.agents() - self.failed.len()
    }

    pub fn is_live(&self, agent: usize) -> bool {
        agent < self.agents() && !self.failed.contains(&agent)
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.round)
    }

    /// Comments from checkpoints whose selected version is an ancestor of
    /// (or equal to) `base`, oldest first.
    pub fn lineage_feedback(&self, base: &VersionId) -> Vec<String> {
        self.checkpoints
            .iter()
            .filter_map(|c| c.feedback.as_ref())
            .filter(|f| self.graph.precedes(&f.selected, base).unwrap_or(false))
            .filter_map(|f| f.comment.clone())
            .collect()
    }

    fn agent(&self, agent: usize) -> Result<(), RunError> {
        if agent >= self.agents() {
            return Err(RunError::Journal(format!("agent {agent} out of range")));
        }
        Ok(())
    }

    /// Validates `ev` against the current state and applies it. Nothing is
    /// changed when an error is returned.
    pub fn apply(&mut self, ev: &Event) -> Result<(), RunError> {
        match ev {
            Event::Root { id } => {
                self.graph.add_root(id.clone())?;
                self.heads = vec![id.clone(); self.agents()];
                self.order.push(id.clone());
            }
            Event::Node {
                id,
                parents,
                agent,
                round,
                operation,
            } => {
                self.agent(*agent)?;
                let expected = match operation {
                    Operation::Mutate => 1,
                    Operation::Crossover => 2,
                    Operation::Init => 0,
                };
                if parents.len() != expected {
                    return Err(RunError::Journal(format!("{operation:?} {id} has {} parents", parents.len())));
                }
                self.graph.add_child(parents, id.clone())?;
                for p in parents {
                    self.graph.record_verdict(p, id)?;
                }
                self.heads[*agent] = id.clone();
                self.origins.insert(
                    id.clone(),
                    Origin {
                        agent: *agent,
                        round: *round,
                        operation: *operation,
                    },
                );
                self.order.push(id.clone());
                let s = &mut self.stats[*agent];
                match operation {
                    Operation::Crossover => s.crossovers += 1,
                    _ => s.mutations += 1,
                }
            }
            Event::Rejected { agent, .. } => {
                self.agent(*agent)?;
                self.stats[*agent].rejected += 1;
            }
            Event::Skipped { agent, .. } => {
                self.agent(*agent)?;
                self.stats[*agent].skipped += 1;
            }
            Event::WorkerFailed { agent, .. } => {
                self.agent(*agent)?;
                self.failed.insert(*agent);
                self.stats[*agent].failed = true;
            }
            Event::Retire { id, reason } => {
                if *reason == RetireReason::Pruned {
                    return Err(RunError::Journal("pruning is recorded by checkpoints".into()));
                }
                self.graph.retire(id)?;
            }
            Event::RoundDone {
                round,
                frontier,
                live_agents,
            } => {
                if *round != self.rounds_done() + 1 {
                    return Err(RunError::Journal(format!(
                        "round {round} completed after round {}",
                        self.rounds_done()
                    )));
                }
                self.rounds.push(RoundSample {
                    round: *round,
                    frontier: *frontier,
                    live_agents: *live_agents,
                });
            }
            Event::Checkpoint {
                index,
                round,
                frontier,
                live_agents,
                feedback,
            } => {
                let current = self.graph.active_frontier();
                if *frontier != current {
                    return Err(RunError::Journal(format!("checkpoint {index} frontier disagrees with the graph")));
                }
                if let Some(rec) = feedback {
                    rec.validate(*index, &current, self.comment_limit)
                        .map_err(RunError::Feedback)?;
                    for p in &rec.pruned {
                        self.graph.retire(p)?;
                    }
                }
                self.checkpoints.push(CheckpointEntry {
                    index: *index,
                    round: *round,
                    frontier: frontier.clone(),
                    live_agents: *live_agents,
                    feedback: feedback.clone(),
                });
            }
        }
        Ok(())
    }
}
