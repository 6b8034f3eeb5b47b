//! Human checkpoint records and the handlers that produce them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::control::RunControl;
use super::RunError;
use crate::graph::VersionId;

/// One human decision at a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRecord {
    pub checkpoint: usize,
    pub selected: VersionId,
    #[serde(default)]
    pub pruned: Vec<VersionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl FeedbackRecord {
    /// Checks membership against the frontier the checkpoint was opened
    /// with.
    pub fn validate(&self, checkpoint: usize, frontier: &[VersionId], comment_limit: usize) -> Result<(), String> {
        if self.checkpoint != checkpoint {
            return Err(format!(
                "feedback is for checkpoint {}, the open checkpoint is {checkpoint}",
                self.checkpoint
            ));
        }
        if !frontier.contains(&self.selected) {
            return Err(format!("selected version {} is not on the frontier", self.selected));
        }
        for (i, p) in self.pruned.iter().enumerate() {
            if !frontier.contains(p) {
                return Err(format!("pruned version {p} is not on the frontier"));
            }
            if *p == self.selected {
                return Err(format!("selected version {p} cannot also be pruned"));
            }
            if self.pruned[..i].contains(p) {
                return Err(format!("version {p} is pruned twice"));
            }
        }
        if let Some(c) = &self.comment {
            let n = c.chars().count();
            if n > comment_limit {
                return Err(format!("comment has {n} characters, the limit is {comment_limit}"));
            }
        }
        Ok(())
    }
}

/// What a handler sees when a checkpoint opens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckpointView {
    pub index: usize,
    pub round: usize,
    pub frontier: Vec<VersionId>,
}

/// Produces the decision for each checkpoint. `None` keeps everything.
pub trait CheckpointHandler: Send {
    fn decide(&mut self, view: &CheckpointView) -> Result<Option<FeedbackRecord>, RunError>;
}

/// Keep-all policy for unattended runs.
#[derive(Debug, Default)]
pub struct Headless;

impl CheckpointHandler for Headless {
    fn decide(&mut self, _view: &CheckpointView) -> Result<Option<FeedbackRecord>, RunError> {
        Ok(None)
    }
}

/// Picks a frontier member: `"frontier:<i>"` by position (depth, then
/// digest order) or a digest prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PruneSpec {
    /// `"rest"`: every frontier member except the selected one.
    Keyword(String),
    List(Vec<String>),
}

/// One line of a feedback script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub checkpoint: usize,
    pub select: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune: Option<PruneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

fn pick(selector: &str, frontier: &[VersionId]) -> Result<VersionId, RunError> {
    if let Some(i) = selector.strip_prefix("frontier:") {
        let i: usize = i
            .parse()
            .map_err(|_| RunError::Feedback(format!("bad frontier position {selector:?}")))?;
        return frontier
            .get(i)
            .cloned()
            .ok_or_else(|| RunError::Feedback(format!("frontier has only {} members", frontier.len())));
    }
    let needle = selector.to_ascii_lowercase();
    let mut hits = frontier.iter().filter(|v| v.to_hex().starts_with(&needle));
    match (hits.next(), hits.next()) {
        (Some(v), None) => Ok(v.clone()),
        (Some(_), Some(_)) => Err(RunError::Feedback(format!("{selector:?} is ambiguous"))),
        _ => Err(RunError::Feedback(format!("{selector:?} matches no frontier member"))),
    }
}

/// Feedback read from a JSON-lines script; checkpoints without an entry
/// keep everything.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    entries: Vec<ScriptEntry>,
}

impl Scripted {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Scripted { entries }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| RunError::Feedback(format!("{}:{}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Scripted { entries })
    }
}

impl CheckpointHandler for Scripted {
    fn decide(&mut self, view: &CheckpointView) -> Result<Option<FeedbackRecord>, RunError> {
        let Some(entry) = self.entries.iter().find(|e| e.checkpoint == view.index) else {
            return Ok(None);
        };
        let selected = pick(&entry.select, &view.frontier)?;
        let pruned = match &entry.prune {
            None => Vec::new(),
            Some(PruneSpec::Keyword(k)) if k == "rest" => {
                view.frontier.iter().filter(|v| **v != selected).cloned().collect()
            }
            Some(PruneSpec::Keyword(k)) => vec![pick(k, &view.frontier)?],
            Some(PruneSpec::List(l)) => l.iter().map(|s| pick(s, &view.frontier)).collect::<Result<_, _>>()?,
        };
        Ok(Some(FeedbackRecord {
            checkpoint: view.index,
            selected,
            pruned,
            comment: entry.comment.clone(),
        }))
    }
}

/// Waits for a decision submitted through [`RunControl`] (the HTTP API) or
/// a resume request, which keeps everything.
pub struct Interactive {
    control: std::sync::Arc<RunControl>,
}

impl Interactive {
    pub fn new(control: std::sync::Arc<RunControl>) -> Self {
        Interactive { control }
    }
}

impl CheckpointHandler for Interactive {
    fn decide(&mut self, view: &CheckpointView) -> Result<Option<FeedbackRecord>, RunError> {
        Ok(self.control.await_decision(view))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids() -> Vec<VersionId> {
        ["a1", "b2", "c3"].iter().map(|h| VersionId::from_hex(h).unwrap()).collect()
    }

    fn rec(selected: usize, pruned: &[usize], comment: Option<&str>) -> FeedbackRecord {
        let v = ids();
        FeedbackRecord {
            checkpoint: 1,
            selected: v[selected].clone(),
            pruned: pruned.iter().map(|&i| v[i].clone()).collect(),
            comment: comment.map(str::to_owned),
        }
    }

    #[test]
    fn validation_rules() {
        let f = ids();
        rec(0, &[1, 2], Some("layout broken on load")).validate(1, &f, 500).unwrap();
        assert!(rec(0, &[0], None).validate(1, &f, 500).is_err());
        assert!(rec(0, &[1, 1], None).validate(1, &f, 500).is_err());
        assert!(rec(0, &[], None).validate(2, &f, 500).is_err());
        assert!(rec(0, &[], None).validate(1, &f[1..], 500).is_err());
        assert!(rec(0, &[2], None).validate(1, &f[..2], 500).is_err());
        let long = "x".repeat(501);
        assert!(rec(0, &[], Some(&long)).validate(1, &f, 500).is_err());
        assert!(rec(0, &[], Some(&long[..500])).validate(1, &f, 500).is_ok());
    }

    #[test]
    fn scripted_selectors() {
        let view = CheckpointView {
            index: 1,
            round: 10,
            frontier: ids(),
        };
        let mut s = Scripted::new(vec![ScriptEntry {
            checkpoint: 1,
            select: "frontier:1".into(),
            prune: Some(PruneSpec::Keyword("rest".into())),
            comment: Some("fine".into()),
        }]);
        let r = s.decide(&view).unwrap().unwrap();
        assert_eq!(r.selected, ids()[1]);
        assert_eq!(r.pruned, vec![ids()[0].clone(), ids()[2].clone()]);
        r.validate(1, &view.frontier, 500).unwrap();
        assert_eq!(s.decide(&CheckpointView { index: 2, ..view.clone() }).unwrap(), None);

        let mut by_prefix = Scripted::new(vec![ScriptEntry {
            checkpoint: 1,
            select: "c3".into(),
            prune: Some(PruneSpec::List(vec!["a1".into()])),
            comment: None,
        }]);
        let r = by_prefix.decide(&view).unwrap().unwrap();
        assert_eq!((r.selected, r.pruned), (ids()[2].clone(), vec![ids()[0].clone()]));
    }

    #[test]
    fn script_lines_parse() {
        let e: ScriptEntry =
            serde_json::from_str(r#"{"checkpoint":2,"select":"frontier:0","prune":"rest","comment":"x"}"#).unwrap();
        assert_eq!(e.prune, Some(PruneSpec::Keyword("rest".into())));
    }
}
