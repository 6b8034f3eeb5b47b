//! Stateless agents and judges.
//!
//! An agent sees only an [`AgentContext`] built fresh for each iteration and
//! answers with a [`MutationProposal`]. A judge looks at a parent/child pair
//! and returns a binary [`JudgeDecision`]. Neither keeps state between calls.

mod llm;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{DiagnosticsReport, RegressionSummary};
use crate::evolution::{EditRegion, RegionMode};
use crate::graph::VersionId;
use crate::vcs::{split_lines, ChangeSet, FileTree, RepoPath};

pub use llm::{
    parse_proposal, parse_verdict, render_template, ChatClient, HttpChatClient, LlmAgent, LlmJudge, PromptLog,
    RetryingClient, DEFAULT_JUDGE_TEMPLATE, DEFAULT_PROPOSE_TEMPLATE,
};
pub use mock::{AppendMarker, RuleJudge, SometimesBreak, SYNTAX_ERROR_TOKEN};

/// Upper bound on the lines an agent may see and rewrite in one iteration.
pub const MAX_REGION_LINES: usize = 128;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("region {0} is out of bounds")]
    RegionOutOfBounds(String),
    #[error("template: {0}")]
    Template(String),
}

/// Binary outcome of a comparison. There is deliberately no score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeDecision {
    pub improved: bool,
    pub rationale: String,
    /// Diagnostics fields the decision was based on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileListing {
    pub path: RepoPath,
    pub lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumberedLine {
    pub number: usize,
    pub text: String,
}

/// Everything an agent is allowed to know for one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentContext {
    pub brief: String,
    pub files: Vec<FileListing>,
    pub region: EditRegion,
    pub region_lines: Vec<NumberedLine>,
    pub feedback: Vec<String>,
}

impl AgentContext {
    /// Region content as it appears in the file, newline-terminated.
    pub fn region_text(&self) -> String {
        self.region_lines.iter().map(|l| format!("{}\n", l.text)).collect()
    }
}

/// The selected region must lie inside `tree`; a create-file region must
/// name a path that is still free.
pub fn build_context(
    brief: &str,
    tree: &FileTree,
    region: &EditRegion,
    feedback: &[String],
) -> Result<AgentContext, AgentError> {
    let out_of_bounds = || AgentError::RegionOutOfBounds(region.to_string());
    if region.len() > MAX_REGION_LINES {
        return Err(out_of_bounds());
    }
    let files = tree
        .iter()
        .map(|(path, entry)| FileListing {
            path: path.clone(),
            lines: entry.line_count(),
        })
        .collect();
    let region_lines = match region.mode {
        RegionMode::CreateFile => {
            if !tree.fits(&region.path) {
                return Err(out_of_bounds());
            }
            Vec::new()
        }
        RegionMode::EditExisting => {
            let text = tree
                .get(&region.path)
                .and_then(|e| e.as_text())
                .ok_or_else(out_of_bounds)?;
            let lines = split_lines(text);
            if region.start == 0 || region.end > lines.len() || region.start > region.end + 1 {
                return Err(out_of_bounds());
            }
            (region.start..=region.end)
                .map(|n| NumberedLine {
                    number: n,
                    text: lines[n - 1].trim_end_matches('\n').to_owned(),
                })
                .collect()
        }
    };
    Ok(AgentContext {
        brief: brief.to_owned(),
        files,
        region: region.clone(),
        region_lines,
        feedback: feedback.to_vec(),
    })
}

/// Replacement text for the context's region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationProposal {
    pub region: EditRegion,
    pub replacement: String,
    pub rationale: String,
}

/// A proposer. Implementations hold configuration only; `seed` is the sole
/// source of variation between calls.
pub trait Agent: Send + Sync {
    fn propose(&self, ctx: &AgentContext, seed: u64) -> Result<MutationProposal, AgentError>;
}

/// Everything a judge may consult about one parent/child pair.
#[derive(Debug, Clone, Copy)]
pub struct JudgeInput<'a> {
    pub parent: &'a VersionId,
    pub child: &'a VersionId,
    pub changes: &'a ChangeSet,
    pub before: &'a DiagnosticsReport,
    pub after: &'a DiagnosticsReport,
    pub regression: &'a RegressionSummary,
    pub rationale: &'a str,
    pub feedback: &'a [String],
}

pub trait Judge: Send + Sync {
    fn judge(&self, input: &JudgeInput<'_>) -> Result<JudgeDecision, AgentError>;
}
