use serde::{Deserialize, Serialize};

use super::state::{AgentStats, CheckpointEntry, RoundSample, RunState};
use super::{Run, RunError};
use crate::canonical;
use crate::graph::VersionId;

pub const REPORT_FILE: &str = "report.json";

/// Summary of a run, persisted as canonical JSON beside the repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub agents: usize,
    pub iterations: usize,
    pub rounds_completed: usize,
    pub versions: usize,
    pub retired: usize,
    pub per_agent: Vec<AgentStats>,
    pub frontier_history: Vec<RoundSample>,
    pub checkpoints: Vec<CheckpointEntry>,
    pub final_frontier: Vec<VersionId>,
    pub wall_clock_ms: u64,
}

impl RunReport {
    pub fn from_state(run: &Run, state: &RunState, wall_clock_ms: u64) -> Self {
        let cfg = &run.config().run;
        RunReport {
            seed: cfg.seed,
            agents: cfg.agents,
            iterations: cfg.iterations,
            rounds_completed: state.rounds_done(),
            versions: state.graph.len(),
            retired: state.graph.retired().len(),
            per_agent: state.stats.clone(),
            frontier_history: state.rounds.clone(),
            checkpoints: state.checkpoints.clone(),
            final_frontier: state.graph.active_frontier(),
            wall_clock_ms: if run.options().test_mode { 0 } else { wall_clock_ms },
        }
    }

    pub fn write(&self, run: &Run) -> Result<(), RunError> {
        let path = run.dir().join(REPORT_FILE);
        let text = canonical::to_string(self).map_err(|e| RunError::Journal(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }

    pub fn load(run: &Run) -> Result<Option<Self>, RunError> {
        let path = run.dir().join(REPORT_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => canonical::from_str(&text)
                .map(Some)
                .map_err(|e| RunError::Journal(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(RunError::io(&path, e)),
        }
    }
}
