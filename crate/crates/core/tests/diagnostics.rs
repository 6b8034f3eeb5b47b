use std::path::Path;
use std::time::Instant;

use evogit_core::diagnostics::{compare_reports, run_in_dir, CheckSpec, ParserKind, Severity, ToolchainConfig};
use evogit_core::VersionId;

fn check(name: &str, argv: &[&str], parser: ParserKind, timeout_secs: u64) -> CheckSpec {
    CheckSpec {
        name: name.into(),
        argv: argv.iter().map(|s| s.to_string()).collect(),
        timeout_secs,
        parser,
        pattern: None,
        severity: None,
    }
}

fn run(dir: &Path, checks: Vec<CheckSpec>) -> evogit_core::diagnostics::DiagnosticsReport {
    let cfg = ToolchainConfig { checks };
    cfg.validate().unwrap();
    run_in_dir(&cfg, dir, &VersionId::from_hex("abcdef01").unwrap(), true)
}

fn grep_syntax() -> CheckSpec {
    check("syntax", &["grep", "-rnH", "@@syntax-error@@", "."], ParserKind::LineRegex, 10)
}

#[test]
fn syntax_error_fixture_reports_path_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("src")).unwrap();
    std::fs::write(tmp.path().join("src/app.js"), "ok();\n@@syntax-error@@ evolved\nok();\n").unwrap();
    let report = run(tmp.path(), vec![grep_syntax()]);
    assert_eq!(report.counts.error, 1);
    let f = &report.checks[0].findings[0];
    assert_eq!((f.path.as_deref(), f.line, f.severity), (Some("src/app.js"), Some(2), Severity::Error));
    report.validate().unwrap();

    let clean = tempfile::tempdir().unwrap();
    std::fs::write(clean.path().join("a.js"), "ok();\n").unwrap();
    let fixed = run(clean.path(), vec![grep_syntax()]);
    assert_eq!(fixed.counts.error, 0);
    let delta = compare_reports(&report, &fixed);
    assert_eq!((delta.new_errors().count(), delta.resolved_errors().count()), (0, 1));
}

#[test]
fn timeouts_kill_the_whole_process_group() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let report = run(
        tmp.path(),
        vec![check("hang", &["sh", "-c", "sleep 30 & sleep 30"], ParserKind::GenericExitCode, 1)],
    );
    assert!(t.elapsed().as_secs() < 10, "took {:?}", t.elapsed());
    let c = &report.checks[0];
    assert!(c.timed_out);
    assert_eq!(c.exit_status, None);
    assert_eq!(c.findings[0].severity, Severity::Error);
    assert!(c.findings[0].message.contains("timeout after 1s"));
}

#[test]
fn missing_command_is_an_error_finding() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run(
        tmp.path(),
        vec![check("ghost", &["evogit-no-such-tool-xyz"], ParserKind::GenericExitCode, 5)],
    );
    assert_eq!(report.counts.error, 1);
    assert!(report.checks[0].findings[0].message.contains("not found"));
}

#[test]
fn checks_run_in_order_with_each_parser() {
    let tmp = tempfile::tempdir().unwrap();
    let json = r#"printf '%s\n' '{"severity":"warning","file":"./a.py","line":3,"message":"unused"}' 'noise' '{"message":"plain"}'"#;
    let mut custom = check("custom", &["sh", "-c", "echo \"W a.c 7 $EVOGIT_VERSION\""], ParserKind::LineRegex, 5);
    custom.pattern = Some(r"^W (?P<path>\S+) (?P<line>\d+) (?P<message>.*)$".into());
    custom.severity = Some(Severity::Info);
    let report = run(
        tmp.path(),
        vec![
            check("fails", &["false"], ParserKind::GenericExitCode, 5),
            check("passes", &["true"], ParserKind::GenericExitCode, 5),
            check("lint", &["sh", "-c", json], ParserKind::JsonLines, 5),
            custom,
        ],
    );
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["fails", "passes", "lint", "custom"]);
    assert_eq!(report.checks[0].exit_status, Some(1));
    assert_eq!(report.checks[0].findings.len(), 1);
    assert!(report.checks[1].findings.is_empty());
    let lint = &report.checks[2].findings;
    assert_eq!(lint.len(), 2);
    assert_eq!((lint[0].severity, lint[0].path.as_deref(), lint[0].line), (Severity::Warning, Some("a.py"), Some(3)));
    let custom = &report.checks[3].findings[0];
    assert_eq!((custom.severity, custom.line), (Severity::Info, Some(7)));
    assert_eq!(custom.message, "abcdef01");
    assert!(report.checks.iter().all(|c| c.duration_ms == 0));
    assert_eq!((report.counts.error, report.counts.warning, report.counts.info), (2, 1, 1));
}
