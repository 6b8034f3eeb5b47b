//! LLM-backed agent and judge behind a narrow prompt-in, text-out client.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::Serialize;

use super::{Agent, AgentContext, AgentError, Judge, JudgeDecision, JudgeInput, MutationProposal};
use crate::evolution::{EditRegion, RegionMode};
use crate::vcs::RepoPath;

pub const DEFAULT_PROPOSE_TEMPLATE: &str = "\
You are improving a code base one small step at a time.

Task:
{{brief}}

Files (path: line count):
{{files}}

Editable region {{region}}:
{{region_content}}

Human feedback for this lineage:
{{feedback}}

Rewrite only the editable region. Reply with a line `RATIONALE: <one line>`,
{{path_hint}}then the complete replacement for the region in one fenced code block.
";

pub const DEFAULT_JUDGE_TEMPLATE: &str = "\
You decide whether a change improves a code base.

Task:
{{brief}}

Author's rationale: {{rationale}}

Change set (JSON):
{{diff}}

Diagnostics before (JSON):
{{before}}

Diagnostics after (JSON):
{{after}}

Regression summary (JSON):
{{regression}}

Human feedback:
{{feedback}}

Answer with `VERDICT: IMPROVED` or `VERDICT: NOT IMPROVED` on the first line,
followed by a short justification.
";

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, AgentError>;
}

/// OpenAI-compatible chat-completions endpoint.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model: &str, token: Option<String>, timeout: Duration) -> Result<Self, AgentError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(HttpChatClient {
            endpoint: endpoint.to_owned(),
            model: model.to_owned(),
            token,
            http,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, AgentError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| AgentError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AgentError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| AgentError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| AgentError::Malformed("no choices[0].message.content".into()))
    }
}

/// Append-only JSON-lines log of every prompt and raw response.
pub struct PromptLog {
    file: Mutex<File>,
}

#[derive(Serialize)]
struct LogEntry<'a> {
    attempt: u32,
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl PromptLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(PromptLog { file: Mutex::new(file) })
    }

    fn record(&self, entry: &LogEntry<'_>) {
        if let Ok(line) = serde_json::to_string(entry) {
            let mut f = self.file.lock();
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("prompt log write failed: {e}");
            }
        }
    }
}

/// Retries transport failures with exponential backoff; malformed
/// responses are returned immediately.
pub struct RetryingClient {
    inner: Arc<dyn ChatClient>,
    retries: u32,
    backoff: Duration,
    log: Option<Arc<PromptLog>>,
}

impl RetryingClient {
    pub fn new(inner: Arc<dyn ChatClient>, retries: u32, backoff: Duration, log: Option<Arc<PromptLog>>) -> Self {
        RetryingClient {
            inner,
            retries,
            backoff,
            log,
        }
    }
}

impl ChatClient for RetryingClient {
    fn complete(&self, prompt: &str) -> Result<String, AgentError> {
        let attempts = self.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            let result = self.inner.complete(prompt);
            if let Some(log) = &self.log {
                let (response, error) = match &result {
                    Ok(r) => (Some(r.as_str()), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                log.record(&LogEntry {
                    attempt,
                    prompt,
                    response,
                    error,
                });
            }
            match result {
                Ok(text) => return Ok(text),
                Err(AgentError::Transport(e)) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(AgentError::Exhausted { attempts, last })
    }
}

/// Replaces `{{name}}` placeholders; unknown placeholders are an error so
/// a typo in a template file fails loudly.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, AgentError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| AgentError::Template("unterminated placeholder".into()))?;
        let name = after[..close].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| AgentError::Template(format!("unknown placeholder {name:?}")))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn bullet_list(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".into()
    } else {
        items.iter().map(|i| format!("- {i}\n")).collect()
    }
}

/// Reads `RATIONALE:`, an optional `PATH:` (create-file regions only) and
/// the first fenced code block.
pub fn parse_proposal(text: &str, region: &EditRegion) -> Result<MutationProposal, AgentError> {
    let mut rationale = None;
    let mut path = None;
    let mut block: Option<String> = None;
    let mut in_block = false;
    for line in text.lines() {
        if in_block {
            if line.trim_start().starts_with("```") {
                in_block = false;
                if block.is_some() {
                    break;
                }
            } else {
                let b = block.get_or_insert_with(String::new);
                b.push_str(line);
                b.push('\n');
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            in_block = true;
            block.get_or_insert_with(String::new);
        } else if let Some(r) = trimmed.strip_prefix("RATIONALE:") {
            rationale.get_or_insert_with(|| r.trim().to_owned());
        } else if let Some(p) = trimmed.strip_prefix("PATH:") {
            path.get_or_insert_with(|| p.trim().to_owned());
        }
    }
    if in_block {
        return Err(AgentError::Malformed("unterminated code block".into()));
    }
    let replacement = block.ok_or_else(|| AgentError::Malformed("no code block".into()))?;
    let rationale = rationale
        .filter(|r| !r.is_empty())
        .ok_or_else(|| AgentError::Malformed("missing RATIONALE".into()))?;
    let mut region = region.clone();
    if let Some(p) = path {
        if region.mode != RegionMode::CreateFile {
            return Err(AgentError::Malformed("PATH is only allowed when creating a file".into()));
        }
        region.path = RepoPath::new(p).map_err(|e| AgentError::Malformed(e.to_string()))?;
    }
    Ok(MutationProposal {
        region,
        replacement,
        rationale,
    })
}

/// `VERDICT: IMPROVED` or `VERDICT: NOT IMPROVED`; anything else counts as
/// not improved.
pub fn parse_verdict(text: &str) -> JudgeDecision {
    let evidence = vec![
        "diagnostics.counts".to_owned(),
        "regression.new".to_owned(),
        "regression.resolved".to_owned(),
    ];
    let mut verdict = None;
    let mut reasons = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        match t.strip_prefix("VERDICT:").map(|v| v.trim().to_ascii_uppercase()) {
            Some(v) if verdict.is_none() && v == "IMPROVED" => verdict = Some(true),
            Some(v) if verdict.is_none() && v == "NOT IMPROVED" => verdict = Some(false),
            _ if !t.is_empty() => reasons.push(t.to_owned()),
            _ => {}
        }
    }
    match verdict {
        Some(improved) => JudgeDecision {
            improved,
            rationale: reasons.join(" "),
            evidence,
        },
        None => JudgeDecision {
            improved: false,
            rationale: "unparseable verdict".into(),
            evidence,
        },
    }
}

pub struct LlmAgent {
    client: Arc<dyn ChatClient>,
    template: String,
}

impl LlmAgent {
    pub fn new(client: Arc<dyn ChatClient>, template: impl Into<String>) -> Self {
        LlmAgent {
            client,
            template: template.into(),
        }
    }

    pub fn prompt(&self, ctx: &AgentContext) -> Result<String, AgentError> {
        let files: String = ctx
            .files
            .iter()
            .map(|f| format!("{}: {}\n", f.path, f.lines))
            .collect();
        let content: String = if ctx.region.mode == RegionMode::CreateFile {
            "(new file)\n".into()
        } else {
            ctx.region_lines
                .iter()
                .map(|l| format!("{:>5} | {}\n", l.number, l.text))
                .collect()
        };
        let path_hint = if ctx.region.mode == RegionMode::CreateFile {
            "optionally a line `PATH: <new file path>`, "
        } else {
            ""
        };
        render_template(
            &self.template,
            &[
                ("brief", &ctx.brief),
                ("files", &files),
                ("region", &ctx.region.to_string()),
                ("region_content", &content),
                ("feedback", &bullet_list(&ctx.feedback)),
                ("path_hint", path_hint),
            ],
        )
    }
}

impl Agent for LlmAgent {
    fn propose(&self, ctx: &AgentContext, _seed: u64) -> Result<MutationProposal, AgentError> {
        let response = self.client.complete(&self.prompt(ctx)?)?;
        parse_proposal(&response, &ctx.region)
    }
}

pub struct LlmJudge {
    client: Arc<dyn ChatClient>,
    template: String,
    brief: String,
}

impl LlmJudge {
    pub fn new(client: Arc<dyn ChatClient>, template: impl Into<String>, brief: impl Into<String>) -> Self {
        LlmJudge {
            client,
            template: template.into(),
            brief: brief.into(),
        }
    }
}

impl Judge for LlmJudge {
    fn judge(&self, input: &JudgeInput<'_>) -> Result<JudgeDecision, AgentError> {
        let prompt = render_template(
            &self.template,
            &[
                ("brief", &self.brief),
                ("rationale", input.rationale),
                ("diff", &pretty(input.changes)),
                ("before", &pretty(input.before)),
                ("after", &pretty(input.after)),
                ("regression", &pretty(input.regression)),
                ("feedback", &bullet_list(input.feedback)),
            ],
        )?;
        Ok(parse_verdict(&self.client.complete(&prompt)?))
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default()
}
