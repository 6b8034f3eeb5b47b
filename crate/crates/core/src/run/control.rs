//! Run control shared by the scheduler and the HTTP API: phase, pause and
//! the checkpoint window through which human decisions arrive.

use parking_lot::{Condvar, Mutex};
use serde::Serialize;
use thiserror::Error;

use super::feedback::{CheckpointView, FeedbackRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "phase", rename_all = "kebab-case")]
pub enum Phase {
    Idle,
    Running,
    Checkpoint { index: usize, round: usize },
    Finished,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("no checkpoint window is open")]
    NotInCheckpoint,
    #[error("{0}")]
    Invalid(String),
}

enum Decision {
    Feedback(FeedbackRecord),
    KeepAll,
}

struct State {
    phase: Phase,
    paused: bool,
    open: Option<CheckpointView>,
    decision: Option<Decision>,
}

pub struct RunControl {
    state: Mutex<State>,
    cv: Condvar,
    comment_limit: usize,
}

impl RunControl {
    pub fn new(comment_limit: usize) -> Self {
        RunControl {
            state: Mutex::new(State {
                phase: Phase::Idle,
                paused: false,
                open: None,
                decision: None,
            }),
            cv: Condvar::new(),
            comment_limit,
        }
    }

    pub fn phase(&self) -> Phase {
        self.state.lock().phase.clone()
    }

    pub fn is_paused(&self) -> bool {
        self.state.lock().paused
    }

    pub fn checkpoint(&self) -> Option<CheckpointView> {
        self.state.lock().open.clone()
    }

    pub(crate) fn set_phase(&self, phase: Phase) {
        self.state.lock().phase = phase;
        self.cv.notify_all();
    }

    /// Workers stop at their next iteration boundary.
    pub fn pause(&self) {
        self.state.lock().paused = true;
    }

    /// Lifts a pause; inside a checkpoint window it closes the window
    /// keeping every frontier version.
    pub fn resume(&self) {
        let mut s = self.state.lock();
        s.paused = false;
        if s.open.is_some() && s.decision.is_none() {
            s.decision = Some(Decision::KeepAll);
        }
        self.cv.notify_all();
    }

    pub(crate) fn wait_while_paused(&self) {
        let mut s = self.state.lock();
        while s.paused {
            self.cv.wait(&mut s);
        }
    }

    /// Accepts a decision for the open checkpoint, validated against the
    /// frontier the window was opened with.
    pub fn submit(&self, record: FeedbackRecord) -> Result<(), ControlError> {
        let mut s = self.state.lock();
        let view = match (&s.open, &s.decision) {
            (Some(v), None) => v,
            _ => return Err(ControlError::NotInCheckpoint),
        };
        record
            .validate(view.index, &view.frontier, self.comment_limit)
            .map_err(ControlError::Invalid)?;
        s.decision = Some(Decision::Feedback(record));
        self.cv.notify_all();
        Ok(())
    }

    /// Opens a checkpoint window and blocks until a decision arrives.
    pub(crate) fn await_decision(&self, view: &CheckpointView) -> Option<FeedbackRecord> {
        let mut s = self.state.lock();
        let previous = std::mem::replace(
            &mut s.phase,
            Phase::Checkpoint {
                index: view.index,
                round: view.round,
            },
        );
        s.open = Some(view.clone());
        s.decision = None;
        self.cv.notify_all();
        while s.decision.is_none() {
            self.cv.wait(&mut s);
        }
        let decision = s.decision.take();
        s.open = None;
        s.phase = previous;
        match decision {
            Some(Decision::Feedback(r)) => Some(r),
            _ => None,
        }
    }

    /// Blocks until a checkpoint window is open. Used by tests and tools
    /// that drive a run programmatically.
    pub fn wait_for_checkpoint(&self, timeout: std::time::Duration) -> Option<CheckpointView> {
        let deadline = std::time::Instant::now() + timeout;
        let mut s = self.state.lock();
        loop {
            if let (Some(v), None) = (&s.open, &s.decision) {
                return Some(v.clone());
            }
            if s.phase == Phase::Finished || self.cv.wait_until(&mut s, deadline).timed_out() {
                return None;
            }
        }
    }
}
