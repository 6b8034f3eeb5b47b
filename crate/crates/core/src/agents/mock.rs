//! Deterministic stand-ins for LLM agents and judges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentContext, AgentError, Judge, JudgeDecision, JudgeInput, MutationProposal};

/// Token the `sometimes-break` agent plants; test toolchains flag it as a
/// syntax error.
pub const SYNTAX_ERROR_TOKEN: &str = "@@syntax-error@@";

fn marker(seed: u64) -> String {
    format!("evolved {seed:016x}")
}

/// Keeps the region and appends one marker line.
#[derive(Debug, Clone, Copy, Default)]
pub struct AppendMarker;

impl Agent for AppendMarker {
    fn propose(&self, ctx: &AgentContext, seed: u64) -> Result<MutationProposal, AgentError> {
        let m = marker(seed);
        Ok(MutationProposal {
            region: ctx.region.clone(),
            replacement: format!("{}{m}\n", ctx.region_text()),
            rationale: format!("append {m}"),
        })
    }
}

/// Like [`AppendMarker`], but with probability `q` the appended line is a
/// syntax error.
#[derive(Debug, Clone, Copy)]
pub struct SometimesBreak {
    pub q: f64,
}

impl Agent for SometimesBreak {
    fn propose(&self, ctx: &AgentContext, seed: u64) -> Result<MutationProposal, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if !rng.gen_bool(self.q.clamp(0.0, 1.0)) {
            return AppendMarker.propose(ctx, seed);
        }
        Ok(MutationProposal {
            region: ctx.region.clone(),
            replacement: format!("{}{SYNTAX_ERROR_TOKEN} {}\n", ctx.region_text(), marker(seed)),
            rationale: format!("append {}", marker(seed)),
        })
    }
}

/// Closed-form gate: any new error rejects; fewer errors accepts; otherwise
/// accept only when configured to and the change has a rationale.
#[derive(Debug, Clone, Copy)]
pub struct RuleJudge {
    pub accept_on_tie: bool,
}

impl Judge for RuleJudge {
    fn judge(&self, input: &JudgeInput<'_>) -> Result<JudgeDecision, AgentError> {
        let new = input.regression.new_errors().count();
        let (before, after) = (input.before.counts.error, input.after.counts.error);
        let evidence = vec![
            format!("regression.new_errors={new}"),
            format!("counts.error={before}->{after}"),
        ];
        let (improved, rationale) = if new > 0 {
            (false, format!("introduces {new} new error(s)"))
        } else if after < before {
            (true, format!("errors drop from {before} to {after}"))
        } else if self.accept_on_tie && input.rationale.lines().count() > 0 {
            (true, "no regression; accepted on tie".to_owned())
        } else {
            (false, "no improvement".to_owned())
        };
        Ok(JudgeDecision {
            improved,
            rationale,
            evidence,
        })
    }
}
