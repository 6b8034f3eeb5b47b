use serde::{Deserialize, Serialize};

use crate::agents::JudgeDecision;
use crate::canonical;
use crate::diagnostics::DiagnosticsReport;
use crate::graph::VersionId;

use super::merge::Conflict;
use super::VcsError;

pub const NOTE_SCHEMA_VERSION: u32 = 1;

/// Notes live under a dedicated, versioned ref so stock `git notes` keeps
/// its default namespace.
pub const NOTES_REF: &str = "refs/notes/evogit/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Init,
    Mutate,
    Crossover,
}

/// A judge decision against one comparison target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub against: VersionId,
    pub decision: JudgeDecision,
}

/// Metadata attached to a commit. Serialized as canonical JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotePayload {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<Operation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge: Vec<JudgeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparison_targets: Vec<VersionId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflicts: Vec<Conflict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_brief: Option<String>,
}

impl Default for NotePayload {
    fn default() -> Self {
        NotePayload {
            schema_version: NOTE_SCHEMA_VERSION,
            operation: None,
            agent: None,
            diagnostics: None,
            judge: Vec::new(),
            comparison_targets: Vec::new(),
            conflicts: Vec::new(),
            feedback: None,
            task_brief: None,
        }
    }
}

impl NotePayload {
    pub fn validate(&self) -> Result<(), VcsError> {
        if self.schema_version != NOTE_SCHEMA_VERSION {
            return Err(VcsError::MalformedNote(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if let Some(d) = &self.diagnostics {
            d.validate().map_err(VcsError::MalformedNote)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, VcsError> {
        self.validate()?;
        canonical::to_string(self).map_err(|e| VcsError::MalformedNote(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, VcsError> {
        let payload: NotePayload =
            canonical::from_str(text).map_err(|e| VcsError::MalformedNote(e.to_string()))?;
        payload.validate()?;
        Ok(payload)
    }
}
