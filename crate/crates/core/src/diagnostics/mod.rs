//! Build, lint and type-check integration.
//!
//! Each configured check runs as a child process in a checked-out working
//! directory. Its output is normalized into findings by a small parser
//! adapter and gathered into a [`DiagnosticsReport`], which travels in the
//! version's note.

mod parse;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::graph::VersionId;
use crate::vcs::{GitStore, VcsError};

pub use parse::DEFAULT_LINE_PATTERN;

/// Environment variable carrying the digest of the version under check.
pub const VERSION_ENV: &str = "EVOGIT_VERSION";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParserKind {
    GenericExitCode,
    JsonLines,
    LineRegex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    pub argv: Vec<String>,
    pub timeout_secs: u64,
    pub parser: ParserKind,
    /// Regex for `line-regex`; named groups `path`, `line`, `message` and
    /// optionally `severity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    /// Severity for findings whose output does not state one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainConfig {
    pub checks: Vec<CheckSpec>,
}

impl ToolchainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.checks.is_empty() {
            return Err("toolchain needs at least one check".into());
        }
        for c in &self.checks {
            if c.name.trim().is_empty() {
                return Err("check name must not be empty".into());
            }
            if c.argv.is_empty() {
                return Err(format!("check {:?} has an empty argv", c.name));
            }
            if c.timeout_secs == 0 {
                return Err(format!("check {:?} needs a timeout > 0", c.name));
            }
            if let Some(p) = &c.pattern {
                Regex::new(p).map_err(|e| format!("check {:?}: bad pattern: {e}", c.name))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// `None` when the process never started or was killed.
    pub exit_status: Option<i32>,
    pub duration_ms: u64,
    #[serde(default)]
    pub timed_out: bool,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub error: usize,
    pub warning: usize,
    pub info: usize,
}

impl SeverityCounts {
    fn add(&mut self, s: Severity) {
        match s {
            Severity::Error => self.error += 1,
            Severity::Warning => self.warning += 1,
            Severity::Info => self.info += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<CheckResult>,
    pub counts: SeverityCounts,
}

impl DiagnosticsReport {
    pub fn from_checks(checks: Vec<CheckResult>) -> Self {
        let mut counts = SeverityCounts::default();
        for f in checks.iter().flat_map(|c| &c.findings) {
            counts.add(f.severity);
        }
        DiagnosticsReport { checks, counts }
    }

    /// Aggregate counts must equal the per-finding tally.
    pub fn validate(&self) -> Result<(), String> {
        let expected = Self::from_checks(self.checks.clone()).counts;
        if expected != self.counts {
            return Err(format!("counts {:?} disagree with findings {:?}", self.counts, expected));
        }
        Ok(())
    }

    /// Equality ignoring durations.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.checks.iter_mut().for_each(|c| c.duration_ms = 0);
            r
        };
        strip(self) == strip(other)
    }

    fn keyed(&self) -> BTreeMap<FindingKey, Severity> {
        self.checks
            .iter()
            .flat_map(|c| {
                c.findings.iter().map(move |f| {
                    (
                        FindingKey {
                            check: c.name.clone(),
                            path: f.path.clone(),
                            line: f.line,
                            message: f.message.clone(),
                        },
                        f.severity,
                    )
                })
            })
            .collect()
    }
}

/// Identity of a finding across reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FindingKey {
    pub check: String,
    pub path: Option<String>,
    pub line: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaFinding {
    pub key: FindingKey,
    pub severity: Severity,
}

/// Difference between a report before and after a change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub new: Vec<DeltaFinding>,
    pub resolved: Vec<DeltaFinding>,
    pub unchanged: Vec<DeltaFinding>,
}

impl RegressionSummary {
    /// No finding appeared or disappeared.
    pub fn is_empty(&self) -> bool {
        self.new.is_empty() && self.resolved.is_empty()
    }

    pub fn new_errors(&self) -> impl Iterator<Item = &DeltaFinding> + '_ {
        self.new.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn resolved_errors(&self) -> impl Iterator<Item = &DeltaFinding> + '_ {
        self.resolved.iter().filter(|d| d.severity == Severity::Error)
    }
}

pub fn compare_reports(before: &DiagnosticsReport, after: &DiagnosticsReport) -> RegressionSummary {
    let (b, a) = (before.keyed(), after.keyed());
    let mut summary = RegressionSummary::default();
    for (key, &severity) in &a {
        let entry = DeltaFinding {
            key: key.clone(),
            severity,
        };
        if b.contains_key(key) {
            summary.unchanged.push(entry);
        } else {
            summary.new.push(entry);
        }
    }
    for (key, &severity) in &b {
        if !a.contains_key(key) {
            summary.resolved.push(DeltaFinding {
                key: key.clone(),
                severity,
            });
        }
    }
    summary
}

/// Runs every check in declared order inside `workdir`. A failing, missing
/// or hung check becomes an error finding; later checks still run.
pub fn run_in_dir(
    cfg: &ToolchainConfig,
    workdir: &Path,
    version: &VersionId,
    pin_durations: bool,
) -> DiagnosticsReport {
    let checks = cfg
        .checks
        .iter()
        .map(|spec| {
            let mut result = run_check(spec, workdir, version);
            if pin_durations {
                result.duration_ms = 0;
            }
            result
        })
        .collect();
    DiagnosticsReport::from_checks(checks)
}

/// Checks out `id` into `workdir`, runs the toolchain and stores the report
/// in the version's note, keeping the rest of the payload.
pub fn run_checks(
    store: &GitStore,
    id: &VersionId,
    cfg: &ToolchainConfig,
    workdir: &Path,
    pin_durations: bool,
) -> Result<DiagnosticsReport, VcsError> {
    store.read_tree(id)?.materialize(workdir)?;
    let report = run_in_dir(cfg, workdir, id, pin_durations);
    let mut note = store.read_note(id)?.unwrap_or_default();
    note.diagnostics = Some(report.clone());
    store.attach_note(id, &note)?;
    Ok(report)
}

fn error_finding(message: String) -> Finding {
    Finding {
        severity: Severity::Error,
        path: None,
        line: None,
        message,
    }
}

fn run_check(spec: &CheckSpec, workdir: &Path, version: &VersionId) -> CheckResult {
    let started = Instant::now();
    let mut result = CheckResult {
        name: spec.name.clone(),
        exit_status: None,
        duration_ms: 0,
        timed_out: false,
        findings: Vec::new(),
    };
    let mut cmd = Command::new(&spec.argv[0]);
    cmd.args(&spec.argv[1..])
        .current_dir(workdir)
        .env(VERSION_ENV, version.to_hex())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            result.findings.push(error_finding(format!("command not found: {}", spec.argv[0])));
            return result;
        }
        Err(e) => {
            result.findings.push(error_finding(format!("failed to start {}: {e}", spec.argv[0])));
            return result;
        }
    };
    let stdout = child.stdout.take().map(drain);
    let stderr = child.stderr.take().map(drain);

    let status = match child.wait_timeout(Duration::from_secs(spec.timeout_secs)) {
        Ok(Some(status)) => Some(status),
        Ok(None) => {
            kill_tree(&mut child);
            result.timed_out = true;
            None
        }
        Err(e) => {
            kill_tree(&mut child);
            result.findings.push(error_finding(format!("waiting for {}: {e}", spec.name)));
            None
        }
    };
    result.duration_ms = started.elapsed().as_millis() as u64;

    if result.timed_out {
        result
            .findings
            .push(error_finding(format!("timeout after {}s", spec.timeout_secs)));
        return result;
    }
    let Some(status) = status else { return result };
    result.exit_status = status.code();
    let out = stdout.map(|h| h.join().unwrap_or_default()).unwrap_or_default();
    let err = stderr.map(|h| h.join().unwrap_or_default()).unwrap_or_default();
    let combined = if err.is_empty() { out } else { format!("{out}\n{err}") };

    let default = spec.severity.unwrap_or(Severity::Error);
    match spec.parser {
        ParserKind::GenericExitCode => {
            if !status.success() {
                let code = status.code().map_or_else(|| "signal".to_owned(), |c| c.to_string());
                result.findings.push(Finding {
                    severity: default,
                    path: None,
                    line: None,
                    message: format!("exited with status {code}"),
                });
            }
        }
        ParserKind::JsonLines => result.findings = parse::json_lines(&combined, default),
        ParserKind::LineRegex => {
            let pattern = spec.pattern.as_deref().unwrap_or(DEFAULT_LINE_PATTERN);
            match Regex::new(pattern) {
                Ok(re) => result.findings = parse::line_regex(&combined, &re, default),
                Err(e) => result.findings.push(error_finding(format!("bad pattern: {e}"))),
            }
        }
    }
    result
}

fn drain<R: Read + Send + 'static>(mut r: R) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // The child leads its own process group; take the whole group down
        // so grandchildren holding the pipes die too.
        use nix::sys::signal::{killpg, Signal};
        use nix::unistd::Pid;
        let _ = killpg(Pid::from_raw(child.id() as i32), Signal::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(sev: Severity, path: &str, line: u32, msg: &str) -> Finding {
        Finding {
            severity: sev,
            path: Some(path.into()),
            line: Some(line),
            message: msg.into(),
        }
    }

    fn report(findings: Vec<Finding>) -> DiagnosticsReport {
        DiagnosticsReport::from_checks(vec![CheckResult {
            name: "lint".into(),
            exit_status: Some(0),
            duration_ms: 5,
            timed_out: false,
            findings,
        }])
    }

    #[test]
    fn counts_match_findings() {
        let r = report(vec![
            finding(Severity::Error, "a", 1, "x"),
            finding(Severity::Warning, "a", 2, "y"),
            finding(Severity::Error, "b", 1, "z"),
        ]);
        assert_eq!(r.counts, SeverityCounts { error: 2, warning: 1, info: 0 });
        r.validate().unwrap();
        let mut bad = r.clone();
        bad.counts.error = 7;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identical_reports_yield_empty_delta() {
        let r = report(vec![finding(Severity::Error, "a", 1, "x")]);
        let d = compare_reports(&r, &r);
        assert!(d.is_empty());
        assert_eq!(d.unchanged.len(), 1);
    }

    #[test]
    fn all_errors_resolved() {
        let before = report(vec![
            finding(Severity::Error, "a", 1, "x"),
            finding(Severity::Error, "a", 9, "y"),
        ]);
        let d = compare_reports(&before, &report(vec![]));
        assert_eq!(d.resolved_errors().count(), 2);
        assert_eq!(d.new_errors().count(), 0);
    }

    #[test]
    fn disjoint_error_sets() {
        let before = report(vec![finding(Severity::Error, "a", 1, "x")]);
        let after = report(vec![finding(Severity::Error, "b", 2, "y")]);
        let d = compare_reports(&before, &after);
        assert_eq!((d.new.len(), d.resolved.len()), (1, 1));
        let swapped = compare_reports(&after, &before);
        assert_eq!(swapped.new, d.resolved);
        assert_eq!(swapped.resolved, d.new);
    }

    #[test]
    fn same_outcome_ignores_duration() {
        let a = report(vec![]);
        let mut b = a.clone();
        b.checks[0].duration_ms = 999;
        assert!(a.same_outcome(&b));
        assert_ne!(a, b);
    }

    #[test]
    fn toolchain_validation() {
        let spec = CheckSpec {
            name: "build".into(),
            argv: vec!["true".into()],
            timeout_secs: 5,
            parser: ParserKind::GenericExitCode,
            pattern: None,
            severity: None,
        };
        assert!(ToolchainConfig { checks: vec![] }.validate().is_err());
        assert!(ToolchainConfig { checks: vec![spec.clone()] }.validate().is_ok());
        let zero = CheckSpec { timeout_secs: 0, ..spec.clone() };
        assert!(ToolchainConfig { checks: vec![zero] }.validate().is_err());
        let bad_re = CheckSpec { pattern: Some("(".into()), ..spec };
        assert!(ToolchainConfig { checks: vec![bad_re] }.validate().is_err());
    }
}
