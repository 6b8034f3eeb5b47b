//! Acceptance report: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Thresholds are fixed here, not tuned to observed values.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;
mod common;

use std::process::Stdio;
use std::time::{Duration, Instant};

use common::*;
use evogit_core::run::{Run, RunOptions};
use evogit_core::VersionId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEST: RunOptions = RunOptions { test_mode: true };

type Outcome = Result<String, String>;

fn check(failures: &mut usize, name: &str, f: impl FnOnce() -> Outcome) {
    let started = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
        Err(detail) => {
            *failures += 1;
            println!("FAIL {name}: {detail} [{secs:.1}s]");
        }
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(out: std::process::Output, what: &str) -> Result<String, String> {
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{what} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let started = Instant::now();
    let detail = f()?;
    let took = started.elapsed();
    require(took < limit, || format!("took {took:.1?}, limit {limit:?}"))?;
    Ok(format!("{detail}; {took:.1?} < {limit:?}"))
}

const E2E: Params<'static> = Params {
    seed: 2024,
    agents: 16,
    iterations: 40,
    interval: 10,
    strategies: &["append-marker", "sometimes-break"],
    scheduler: "lockstep",
};

fn mock_run(p: &Params<'_>) -> Result<(Fixture, Duration), String> {
    let f = fixture(p);
    cli(f.init(), "init")?;
    let started = Instant::now();
    cli(f.run(&[]), "run")?;
    Ok((f, started.elapsed()))
}

fn end_to_end() -> Outcome {
    let limit = Duration::from_secs(300);
    let (first, took) = mock_run(&E2E)?;
    require(took < limit, || format!("run took {took:.1?}, limit {limit:?}"))?;
    let run = Run::open_readonly(&first.run_dir, TEST).map_err(|e| e.to_string())?;
    let s = run.state();
    s.graph.check_invariants().map_err(|e| format!("graph invariants: {e}"))?;
    let root = s.root().clone();
    require(s.graph.root() == Some(&root), || "graph root differs from the initial commit".into())?;
    for (i, v) in s.order.iter().enumerate() {
        require(s.graph.precedes(&root, v).unwrap(), || format!("{v} does not descend from the root"))?;
        for p in s.graph.parents(v).unwrap() {
            let before = s.order[..i].contains(&p);
            require(before, || format!("{v} precedes its parent {p} in commit order"))?;
        }
        let note = run.store().read_note(v).map_err(|e| e.to_string())?;
        require(note.is_some_and(|n| n.diagnostics.is_some()), || format!("{v} has no diagnostics note"))?;
    }
    let commits = run.store().reachable_commits().map_err(|e| e.to_string())?;
    require(commits.len() == s.order.len(), || {
        format!("{} commits in the repository, {} in the graph", commits.len(), s.order.len())
    })?;
    let bound = E2E.agents;
    let widest = s.checkpoints.iter().map(|c| c.frontier.len()).max().unwrap_or(0);
    require(s.checkpoints.len() == 4, || format!("{} checkpoints, expected 4", s.checkpoints.len()))?;
    require(widest <= bound, || format!("frontier of {widest} at a checkpoint exceeds {bound}"))?;
    let widest_round = s.rounds.iter().map(|r| r.frontier).max().unwrap_or(0);
    require(widest_round <= bound, || format!("frontier of {widest_round} after a round exceeds {bound}"))?;
    let digests: Vec<VersionId> = s.order.clone();
    let versions = digests.len();
    drop(s);

    let (second, _) = mock_run(&E2E)?;
    let again = Run::open_readonly(&second.run_dir, TEST).map_err(|e| e.to_string())?;
    require(again.state().order == digests, || "repeat run produced different commit digests".into())?;
    let graphs = (
        cli(first.inspect(&["export", "--format", "json"]), "export")?,
        cli(second.inspect(&["export", "--format", "json"]), "export")?,
    );
    require(graphs.0 == graphs.1, || "repeat run exported a different graph".into())?;
    Ok(format!(
        "{versions} versions in {took:.1?} (< {limit:?}), max checkpoint frontier {widest} <= {bound}, repeat identical"
    ))
}

fn locality() -> Outcome {
    let (f, _) = mock_run(&Params {
        seed: 99,
        agents: 6,
        iterations: 20,
        interval: 5,
        strategies: &["append-marker", "sometimes-break"],
        scheduler: "lockstep",
    })?;
    let run = Run::open_readonly(&f.run_dir, TEST).map_err(|e| e.to_string())?;
    oracle::suites::locality(&run)
}

fn intervention() -> Outcome {
    let p = Params {
        seed: 5,
        agents: 6,
        iterations: 16,
        interval: 4,
        strategies: &["append-marker"],
        scheduler: "lockstep",
    };
    let f = fixture(&p);
    cli(f.init(), "init")?;
    let script = f.root().join("feedback.jsonl");
    std::fs::write(&script, "{\"checkpoint\":1,\"select\":\"frontier:0\",\"prune\":\"rest\"}\n").unwrap();
    cli(f.run(&["--feedback", script.to_str().unwrap()]), "run")?;
    let run = Run::open_readonly(&f.run_dir, TEST).map_err(|e| e.to_string())?;
    let s = run.state();
    let cp = s.checkpoints.first().ok_or("no checkpoint recorded")?;
    let fb = cp.feedback.as_ref().ok_or("checkpoint 1 has no feedback")?;
    require(cp.frontier.len() > 1, || format!("only {} frontier members at checkpoint 1", cp.frontier.len()))?;
    require(fb.pruned.len() + 1 == cp.frontier.len(), || "not pruned to a single survivor".into())?;
    let survivor = &fb.selected;
    let mut later = 0usize;
    for v in &s.order {
        let Some(origin) = s.origins.get(v) else { continue };
        if origin.round <= cp.round {
            continue;
        }
        later += 1;
        require(s.graph.precedes(survivor, v).unwrap(), || format!("{v} (round {}) escapes the survivor", origin.round))?;
    }
    require(later > 0, || "no commits after the checkpoint".into())?;
    Ok(format!("{later}/{later} post-checkpoint commits descend from {}", survivor.short()))
}

fn crash_safety() -> Outcome {
    let p = Params {
        seed: 0,
        agents: 4,
        iterations: 30,
        interval: 5,
        strategies: &["append-marker", "sometimes-break"],
        scheduler: "lockstep",
    };
    let (_, full) = mock_run(&p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut interrupted = 0usize;
    for k in 0..10u64 {
        let f = fixture(&Params { seed: k, ..p });
        cli(f.init(), "init")?;
        let delay = Duration::from_secs_f64(rng.gen_range(0.0..1.0) * full.as_secs_f64());
        let mut child = bin()
            .args(["run", "--config", f.config.to_str().unwrap()])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        std::thread::sleep(delay);
        let finished = child.try_wait().unwrap().is_some();
        child.kill().ok();
        child.wait().unwrap();
        if !finished && !f.run_dir.join("report.json").exists() {
            interrupted += 1;
        }
        cli(f.inspect(&["status"]), &format!("status after kill {k} at {delay:.2?}"))?;
        cli(f.run(&[]), &format!("resume after kill {k}"))?;
        cli(f.inspect(&["status"]), &format!("status after resume {k}"))?;
    }
    require(interrupted >= 5, || format!("only {interrupted}/10 kills landed mid-run"))?;
    Ok(format!("10/10 restarts valid ({interrupted} killed mid-run, all resumed to completion)"))
}

fn main() {
    let mut failures = 0usize;
    check(&mut failures, "partial-order", || timed(Duration::from_secs(10), || oracle::suites::partial_order(200, 11)));
    check(&mut failures, "lca", || oracle::suites::lca(500, 12));
    check(&mut failures, "ledger", || oracle::suites::ledger(100, 13));
    check(&mut failures, "merge-disjoint", || oracle::suites::merge_disjoint(100, 14));
    check(&mut failures, "merge-frequency", || oracle::suites::merge_frequency(1000));
    check(&mut failures, "merge-determinism", || oracle::suites::merge_repeat(10));
    check(&mut failures, "locality", locality);
    check(&mut failures, "end-to-end", end_to_end);
    check(&mut failures, "intervention", intervention);
    check(&mut failures, "crash-safety", crash_safety);
    println!("{} criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
