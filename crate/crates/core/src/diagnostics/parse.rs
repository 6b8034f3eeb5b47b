use regex::Regex;
use serde::Deserialize;

use super::{Finding, Severity};

/// Matches `path:line[:col]: [severity:] message`, the shape shared by most
/// compilers and linters.
pub const DEFAULT_LINE_PATTERN: &str = r"^(?:\./)?(?P<path>[^:\s][^:]*):(?P<line>\d+):(?:\d+:)?\s*(?:(?P<severity>error|warning|warn|info|note)\s*:)?\s*(?P<message>.*)$";

pub(super) fn parse_severity(s: &str) -> Option<Severity> {
    match s.to_ascii_lowercase().as_str() {
        "error" | "fatal" => Some(Severity::Error),
        "warning" | "warn" => Some(Severity::Warning),
        "info" | "note" | "hint" => Some(Severity::Info),
        _ => None,
    }
}

pub(super) fn line_regex(output: &str, re: &Regex, default: Severity) -> Vec<Finding> {
    output
        .lines()
        .filter_map(|line| {
            let caps = re.captures(line)?;
            let severity = caps
                .name("severity")
                .and_then(|m| parse_severity(m.as_str()))
                .unwrap_or(default);
            let path = caps
                .name("path")
                .map(|m| m.as_str().trim_start_matches("./").to_owned());
            let line_no = caps.name("line").and_then(|m| m.as_str().parse().ok());
            let message = caps
                .name("message")
                .map_or_else(|| line.to_owned(), |m| m.as_str().trim().to_owned());
            Some(Finding {
                severity,
                path,
                line: line_no,
                message,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct JsonFinding {
    #[serde(default)]
    severity: Option<String>,
    #[serde(default, alias = "file")]
    path: Option<String>,
    #[serde(default)]
    line: Option<u32>,
    message: String,
}

/// One JSON object per line; lines that are not findings are skipped.
pub(super) fn json_lines(output: &str, default: Severity) -> Vec<Finding> {
    output
        .lines()
        .filter(|l| l.trim_start().starts_with('{'))
        .filter_map(|l| serde_json::from_str::<JsonFinding>(l).ok())
        .map(|f| Finding {
            severity: f
                .severity
                .as_deref()
                .and_then(parse_severity)
                .unwrap_or(default),
            path: f.path.map(|p| p.trim_start_matches("./").to_owned()),
            line: f.line,
            message: f.message,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pattern_variants() {
        let re = Regex::new(DEFAULT_LINE_PATTERN).unwrap();
        let out = "./src/a.js:12:5: error: Unexpected token\n\
                   src/b.py:3: warning: unused import\n\
                   lib/c.txt:7:@@syntax-error@@\n\
                   not a finding\n";
        let f = line_regex(out, &re, Severity::Error);
        assert_eq!(f.len(), 3);
        assert_eq!(f[0].path.as_deref(), Some("src/a.js"));
        assert_eq!(f[0].line, Some(12));
        assert_eq!(f[0].severity, Severity::Error);
        assert_eq!(f[0].message, "Unexpected token");
        assert_eq!(f[1].severity, Severity::Warning);
        assert_eq!(f[2].line, Some(7));
        assert_eq!(f[2].message, "@@syntax-error@@");
    }

    #[test]
    fn json_lines_parser() {
        let out = r#"{"severity":"warning","path":"a.ts","line":4,"message":"x"}
garbage
{"file":"./b.ts","message":"y"}
{"severity":"error"}
"#;
        let f = json_lines(out, Severity::Error);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].severity, Severity::Warning);
        assert_eq!(f[1].path.as_deref(), Some("b.ts"));
        assert_eq!(f[1].severity, Severity::Error);
        assert_eq!(f[1].line, None);
    }
}
