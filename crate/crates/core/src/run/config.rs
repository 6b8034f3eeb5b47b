//! The declarative run configuration: one TOML document holding the run
//! parameters, agent and judge selection, optional LLM settings and the
//! toolchain checks. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::diagnostics::{CheckSpec, ToolchainConfig};

/// Name of the frozen copy inside the run directory.
pub const FROZEN_CONFIG: &str = "config.toml";
const TEMPLATE_DIR: &str = "templates";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Run directory, relative to the config file.
    pub run_dir: PathBuf,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub agents: AgentsSection,
    #[serde(default)]
    pub judge: JudgeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmSection>,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// Agents prepare each round in parallel against one snapshot and are
    /// accepted in index order. Reproducible.
    Lockstep,
    /// Agents run free between checkpoints.
    Async,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub agents: usize,
    pub iterations: usize,
    pub feedback_interval: usize,
    /// Probability that an iteration attempts crossover instead of mutation.
    pub crossover_rate: f64,
    /// Probability that a mutation creates a new file.
    pub p_new: f64,
    pub comment_limit: usize,
    pub scheduler: SchedulerKind,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            agents: 16,
            iterations: 120,
            feedback_interval: 10,
            crossover_rate: 0.125,
            p_new: 0.05,
            comment_limit: 500,
            scheduler: SchedulerKind::Lockstep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    AppendMarker,
    SometimesBreak,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsSection {
    /// Assigned to agents round-robin by index.
    pub strategies: Vec<Strategy>,
    /// `q` for `sometimes-break`.
    pub break_probability: f64,
}

impl Default for AgentsSection {
    fn default() -> Self {
        AgentsSection {
            strategies: vec![Strategy::AppendMarker],
            break_probability: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeKind {
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeSection {
    pub kind: JudgeKind,
    pub accept_on_tie: bool,
}

impl Default for JudgeSection {
    fn default() -> Self {
        JudgeSection {
            kind: JudgeKind::Rule,
            accept_on_tie: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Prompt template files, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propose_template: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_template: Option<PathBuf>,
}

fn default_token_env() -> String {
    "EVOGIT_LLM_TOKEN".into()
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_secs() -> u64 {
    120
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, RunError> {
        let cfg: Config = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, resolving `run_dir` and template paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let mut cfg = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.run_dir = base.join(&cfg.run_dir);
        if let Some(llm) = &mut cfg.llm {
            for t in [&mut llm.propose_template, &mut llm.judge_template].into_iter().flatten() {
                *t = base.join(&*t);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        let r = &self.run;
        if r.agents == 0 {
            return bad("run.agents must be at least 1".into());
        }
        if r.iterations == 0 {
            return bad("run.iterations must be at least 1".into());
        }
        if r.feedback_interval == 0 {
            return bad("run.feedback_interval must be at least 1".into());
        }
        for (name, p) in [("run.crossover_rate", r.crossover_rate), ("run.p_new", r.p_new)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.agents.break_probability) {
            return bad("agents.break_probability must lie in [0, 1]".into());
        }
        if self.agents.strategies.is_empty() {
            return bad("agents.strategies must not be empty".into());
        }
        let needs_llm = self.agents.strategies.contains(&Strategy::Llm) || self.judge.kind == JudgeKind::Llm;
        if needs_llm && self.llm.is_none() {
            return bad("an [llm] section is required by the llm agent or judge".into());
        }
        self.toolchain().validate().map_err(RunError::Config)
    }

    pub fn toolchain(&self) -> ToolchainConfig {
        ToolchainConfig {
            checks: self.checks.clone(),
        }
    }

    pub fn strategy(&self, agent: usize) -> Strategy {
        self.agents.strategies[agent % self.agents.strategies.len()]
    }

    /// The form stored inside the run directory: `run_dir = "."` and
    /// templates copied under `templates/`.
    fn frozen(&self) -> Config {
        let mut cfg = self.clone();
        cfg.run_dir = PathBuf::from(".");
        if let Some(llm) = &mut cfg.llm {
            for t in [&mut llm.propose_template, &mut llm.judge_template].into_iter().flatten() {
                let name = t.file_name().map(PathBuf::from).unwrap_or_default();
                *t = Path::new(TEMPLATE_DIR).join(name);
            }
        }
        cfg
    }

    /// Writes the frozen copy (and templates) into `run_dir`.
    pub(crate) fn freeze(&self, run_dir: &Path) -> Result<(), RunError> {
        if let Some(llm) = &self.llm {
            for t in [&llm.propose_template, &llm.judge_template].into_iter().flatten() {
                let dir = run_dir.join(TEMPLATE_DIR);
                std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
                let dest = dir.join(t.file_name().unwrap_or_default());
                std::fs::copy(t, &dest).map_err(|e| RunError::io(t, e))?;
            }
        }
        let text = toml::to_string(&self.frozen()).map_err(|e| RunError::Config(e.to_string()))?;
        let path = run_dir.join(FROZEN_CONFIG);
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }

    /// The frozen configuration of `run_dir`, with paths resolved.
    pub fn load_frozen(run_dir: &Path) -> Result<Config, RunError> {
        Config::load(&run_dir.join(FROZEN_CONFIG))
    }

    /// Whether `self` describes the same run as the frozen copy `other`.
    pub fn matches_frozen(&self, frozen: &Config) -> bool {
        self.frozen() == frozen.frozen()
    }

    pub fn propose_template(&self) -> Result<String, RunError> {
        self.template(|l| l.propose_template.as_deref(), crate::agents::DEFAULT_PROPOSE_TEMPLATE)
    }

    pub fn judge_template(&self) -> Result<String, RunError> {
        self.template(|l| l.judge_template.as_deref(), crate::agents::DEFAULT_JUDGE_TEMPLATE)
    }

    fn template(&self, pick: impl Fn(&LlmSection) -> Option<&Path>, default: &str) -> Result<String, RunError> {
        match self.llm.as_ref().and_then(pick) {
            Some(p) => std::fs::read_to_string(p).map_err(|e| RunError::io(p, e)),
            None => Ok(default.to_owned()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
run_dir = "run"

[[checks]]
name = "build"
argv = ["true"]
timeout_secs = 10
parser = "generic-exit-code"
"#;

    #[test]
    fn defaults() {
        let cfg = Config::parse(MINIMAL).unwrap();
        assert_eq!(cfg.run.agents, 16);
        assert_eq!(cfg.run.iterations, 120);
        assert_eq!(cfg.run.feedback_interval, 10);
        assert_eq!(cfg.run.p_new, 0.05);
        assert_eq!(cfg.run.comment_limit, 500);
        assert_eq!(cfg.strategy(5), Strategy::AppendMarker);
        assert!(cfg.judge.accept_on_tie);
    }

    #[test]
    fn rejects_bad_values() {
        let zero = MINIMAL.replace("run_dir = \"run\"", "run_dir = \"run\"\n[run]\nfeedback_interval = 0");
        assert!(matches!(Config::parse(&zero), Err(RunError::Config(m)) if m.contains("feedback_interval")));
        let unknown = MINIMAL.replace("run_dir = \"run\"", "run_dir = \"run\"\ncolour = \"blue\"");
        assert!(Config::parse(&unknown).is_err());
        let no_checks = "run_dir = \"run\"\nchecks = []\n";
        assert!(Config::parse(no_checks).is_err());
        let llm_missing = MINIMAL.replace("run_dir = \"run\"", "run_dir = \"run\"\n[judge]\nkind = \"llm\"");
        assert!(Config::parse(&llm_missing).is_err());
    }

    #[test]
    fn freeze_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("evogit.toml");
        std::fs::write(&cfg_path, MINIMAL).unwrap();
        let cfg = Config::load(&cfg_path).unwrap();
        assert_eq!(cfg.run_dir, dir.path().join("run"));
        let run_dir = dir.path().join("run");
        std::fs::create_dir_all(&run_dir).unwrap();
        cfg.freeze(&run_dir).unwrap();
        let frozen = Config::load_frozen(&run_dir).unwrap();
        assert!(cfg.matches_frozen(&frozen));
        let mut other = cfg.clone();
        other.run.seed = 9;
        assert!(!other.matches_frozen(&frozen));
    }
}
