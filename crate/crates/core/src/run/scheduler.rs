//! The population scheduler.
//!
//! Every live agent performs one iteration per round. Rounds are numbered
//! from 1; after rounds `n, 2n, …` and after the last round the run stops
//! at a checkpoint barrier. Two schedules are available:
//!
//! * lockstep — each round, agents prepare concurrently against one
//!   snapshot of the state and are settled in index order. The outcome is
//!   a function of configuration and seeds.
//! * async — agents run free between checkpoints and settle as they
//!   finish.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{JudgeKind, SchedulerKind, Strategy};
use super::control::{Phase, RunControl};
use super::feedback::{CheckpointHandler, CheckpointView};
use super::journal::Event;
use super::report::RunReport;
use super::state::RunState;
use super::{Run, RunError};
use crate::agents::{
    Agent, AppendMarker, ChatClient, HttpChatClient, Judge, LlmAgent, LlmJudge, PromptLog, RetryingClient, RuleJudge,
    SometimesBreak,
};
use crate::diagnostics::ToolchainConfig;
use crate::evolution::{crossover, mutate, select_base, Attempt, EvolutionError, Workbench};
use crate::vcs::Operation;

/// The agents (one per index) and the judge of a run.
pub struct Population {
    agents: Vec<Arc<dyn Agent>>,
    judge: Arc<dyn Judge>,
}

impl Population {
    pub fn new(agents: Vec<Arc<dyn Agent>>, judge: Arc<dyn Judge>) -> Self {
        Population { agents, judge }
    }

    pub fn from_config(run: &Run) -> Result<Self, RunError> {
        let cfg = run.config();
        let client: Option<Arc<dyn ChatClient>> = match &cfg.llm {
            Some(llm) => {
                let token = std::env::var(&llm.token_env).ok();
                let http = HttpChatClient::new(&llm.endpoint, &llm.model, token, Duration::from_secs(llm.timeout_secs))
                    .map_err(|e| RunError::Config(e.to_string()))?;
                let log = PromptLog::open(&run.dir().join("llm").join("log.jsonl"))
                    .map_err(|e| RunError::io(&run.dir().join("llm"), e))?;
                Some(Arc::new(RetryingClient::new(
                    Arc::new(http),
                    llm.retries,
                    Duration::from_millis(llm.backoff_ms),
                    Some(Arc::new(log)),
                )))
            }
            None => None,
        };
        let need_client = || client.clone().ok_or_else(|| RunError::Config("[llm] section missing".into()));
        let mut agents: Vec<Arc<dyn Agent>> = Vec::with_capacity(cfg.run.agents);
        for i in 0..cfg.run.agents {
            agents.push(match cfg.strategy(i) {
                Strategy::AppendMarker => Arc::new(AppendMarker),
                Strategy::SometimesBreak => Arc::new(SometimesBreak {
                    q: cfg.agents.break_probability,
                }),
                Strategy::Llm => Arc::new(LlmAgent::new(need_client()?, cfg.propose_template()?)),
            });
        }
        let judge: Arc<dyn Judge> = match cfg.judge.kind {
            JudgeKind::Rule => Arc::new(RuleJudge {
                accept_on_tie: cfg.judge.accept_on_tie,
            }),
            JudgeKind::Llm => Arc::new(LlmJudge::new(need_client()?, cfg.judge_template()?, brief(run)?)),
        };
        Ok(Population { agents, judge })
    }
}

fn brief(run: &Run) -> Result<String, RunError> {
    let root = run.state().root().clone();
    Ok(run.store().read_note(&root)?.and_then(|n| n.task_brief).unwrap_or_default())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one agent's iteration in one round.
pub fn iteration_seed(run_seed: u64, agent: usize, round: usize) -> u64 {
    splitmix(splitmix(splitmix(run_seed) ^ agent as u64) ^ round as u64)
}

struct Shared<'a> {
    run: &'a Run,
    pop: &'a Population,
    brief: String,
    toolchain: ToolchainConfig,
}

enum Settled {
    Alive,
    Dead,
}

impl Shared<'_> {
    fn iterate(&self, snap: &RunState, agent: usize, round: usize) -> (Operation, Result<Attempt, EvolutionError>) {
        let cfg = &self.run.config().run;
        let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(cfg.seed, agent, round));
        let workdir = self.run.workdir(agent);
        let wb = Workbench {
            store: self.run.store(),
            toolchain: &self.toolchain,
            judge: self.pop.judge.as_ref(),
            workdir: &workdir,
            brief: &self.brief,
            agent_index: agent,
            p_new: cfg.p_new,
            pin_durations: self.run.options().test_mode,
        };
        let frontier = snap.graph.active_frontier();
        let base = match select_base(&frontier, &snap.heads[agent], &mut rng) {
            Ok(b) => b,
            Err(e) => return (Operation::Mutate, Err(e)),
        };
        if rng.gen_bool(cfg.crossover_rate) {
            let partners: Vec<_> = frontier
                .iter()
                .filter(|v| snap.graph.incomparable(&base, v).unwrap_or(false))
                .cloned()
                .collect();
            if let Some(other) = partners.choose(&mut rng) {
                let mut feedback = snap.lineage_feedback(&base);
                for c in snap.lineage_feedback(other) {
                    if !feedback.contains(&c) {
                        feedback.push(c);
                    }
                }
                let result = crossover(&wb, &snap.graph, &base, other, &feedback, &mut rng);
                return (Operation::Crossover, result);
            }
        }
        let feedback = snap.lineage_feedback(&base);
        let result = mutate(&wb, &base, self.pop.agents[agent].as_ref(), &feedback, &mut rng);
        (Operation::Mutate, result)
    }

    /// Runs one iteration with panics contained to the agent.
    fn guarded(&self, snap: &RunState, agent: usize, round: usize) -> Result<(Operation, Result<Attempt, EvolutionError>), String> {
        catch_unwind(AssertUnwindSafe(|| self.iterate(snap, agent, round))).map_err(|p| {
            p.downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into())
        })
    }

    fn settle(
        &self,
        agent: usize,
        round: usize,
        outcome: Result<(Operation, Result<Attempt, EvolutionError>), String>,
    ) -> Result<Settled, RunError> {
        let run = self.run;
        match outcome {
            Ok((_, Ok(Attempt::Accepted(c)))) => run.accept(agent, round, &c)?,
            Ok((operation, Ok(Attempt::Rejected { reason }))) => {
                log::debug!("agent-{agent} round {round}: rejected: {reason}");
                run.record(Event::Rejected {
                    agent,
                    round,
                    operation,
                    reason,
                })?
            }
            Ok((_, Err(EvolutionError::Agent(e)))) => {
                log::info!("agent-{agent} round {round}: skipped: {e}");
                run.record(Event::Skipped {
                    agent,
                    round,
                    error: e.to_string(),
                })?
            }
            Ok((_, Err(e))) => {
                run.fail_worker(agent, round, e.to_string())?;
                return Ok(Settled::Dead);
            }
            Err(panic) => {
                run.fail_worker(agent, round, format!("panicked: {panic}"))?;
                return Ok(Settled::Dead);
            }
        }
        Ok(Settled::Alive)
    }

    fn round_done(&self, round: usize) -> Result<(), RunError> {
        let (frontier, live_agents) = {
            let s = self.run.state();
            (s.graph.active_frontier().len(), s.live_agents())
        };
        self.run.record(Event::RoundDone {
            round,
            frontier,
            live_agents,
        })
    }
}

fn is_checkpoint(round: usize, interval: usize, iterations: usize) -> bool {
    round % interval == 0 || round == iterations
}

fn checkpoint(
    run: &Run,
    handler: &mut dyn CheckpointHandler,
    round: usize,
    interval: usize,
) -> Result<(), RunError> {
    let view = CheckpointView {
        index: round.div_ceil(interval),
        round,
        frontier: run.state().graph.active_frontier(),
    };
    let decision = handler.decide(&view)?;
    if let Some(rec) = &decision {
        run.check_feedback(&view, rec)?;
    }
    run.close_checkpoint(&view, decision)
}

/// Runs (or resumes) the population until the iteration budget is spent
/// and writes the report.
pub fn run_population(
    run: &Run,
    pop: &Population,
    handler: &mut dyn CheckpointHandler,
    control: &RunControl,
) -> Result<RunReport, RunError> {
    if !run.is_writable() {
        return Err(RunError::ReadOnly);
    }
    let cfg = run.config().run.clone();
    if pop.agents.len() != cfg.agents {
        return Err(RunError::Config(format!(
            "population has {} agents, configuration asks for {}",
            pop.agents.len(),
            cfg.agents
        )));
    }
    let started = Instant::now();
    control.set_phase(Phase::Running);
    let shared = Shared {
        run,
        pop,
        brief: brief(run)?,
        toolchain: run.config().toolchain(),
    };
    let result = (|| {
        let done = run.state().rounds_done();
        let last_cp = run.state().checkpoints.last().map(|c| c.round);
        if done > 0 && is_checkpoint(done, cfg.feedback_interval, cfg.iterations) && last_cp != Some(done) {
            checkpoint(run, handler, done, cfg.feedback_interval)?;
        }
        match cfg.scheduler {
            SchedulerKind::Lockstep => lockstep(&shared, handler, control, done + 1),
            SchedulerKind::Async => free_running(&shared, handler, control, done + 1),
        }
    })();
    control.set_phase(Phase::Finished);
    result?;
    let report = RunReport::from_state(run, &run.state(), started.elapsed().as_millis() as u64);
    report.write(run)?;
    Ok(report)
}

fn lockstep(
    shared: &Shared<'_>,
    handler: &mut dyn CheckpointHandler,
    control: &RunControl,
    first: usize,
) -> Result<(), RunError> {
    let cfg = &shared.run.config().run;
    for round in first..=cfg.iterations {
        control.wait_while_paused();
        let snap = shared.run.state().clone();
        let live: Vec<usize> = (0..cfg.agents).filter(|&i| snap.is_live(i)).collect();
        if live.is_empty() {
            log::error!("no live agents left; stopping at round {round}");
            break;
        }
        let outcomes: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = live
                .iter()
                .map(|&agent| {
                    let snap = &snap;
                    s.spawn(move || (agent, shared.guarded(snap, agent, round)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("iteration panics are caught"))
                .collect()
        });
        for (agent, outcome) in outcomes {
            shared.settle(agent, round, outcome)?;
        }
        shared.round_done(round)?;
        if is_checkpoint(round, cfg.feedback_interval, cfg.iterations) {
            checkpoint(shared.run, handler, round, cfg.feedback_interval)?;
        }
    }
    Ok(())
}

/// Barrier that elects one arriving thread to run the checkpoint and
/// tolerates workers leaving while others wait.
struct CheckpointBarrier {
    state: Mutex<BarrierState>,
    cv: Condvar,
}

struct BarrierState {
    live: usize,
    arrived: usize,
    generation: u64,
    leader_taken: bool,
}

impl CheckpointBarrier {
    fn new(live: usize) -> Self {
        CheckpointBarrier {
            state: Mutex::new(BarrierState {
                live,
                arrived: 0,
                generation: 0,
                leader_taken: false,
            }),
            cv: Condvar::new(),
        }
    }

    /// True for the leader, which must call [`release`](Self::release).
    fn arrive(&self) -> bool {
        let mut s = self.state.lock();
        s.arrived += 1;
        let generation = s.generation;
        loop {
            if s.generation != generation {
                return false;
            }
            if s.arrived >= s.live && !s.leader_taken {
                s.leader_taken = true;
                return true;
            }
            self.cv.wait(&mut s);
        }
    }

    fn release(&self) {
        let mut s = self.state.lock();
        s.generation += 1;
        s.arrived = 0;
        s.leader_taken = false;
        self.cv.notify_all();
    }

    fn leave(&self) {
        let mut s = self.state.lock();
        s.live -= 1;
        self.cv.notify_all();
    }
}

struct Progress {
    per_agent: Vec<usize>,
    done: usize,
}

fn free_running(
    shared: &Shared<'_>,
    handler: &mut dyn CheckpointHandler,
    control: &RunControl,
    first: usize,
) -> Result<(), RunError> {
    let cfg = &shared.run.config().run;
    let live: Vec<usize> = (0..cfg.agents).filter(|&i| shared.run.state().is_live(i)).collect();
    let barrier = CheckpointBarrier::new(live.len());
    let handler = Mutex::new(handler);
    let progress = Mutex::new(Progress {
        per_agent: vec![first - 1; cfg.agents],
        done: first - 1,
    });
    let failure: Mutex<Option<RunError>> = Mutex::new(None);
    let aborted = || failure.lock().is_some();

    // Advances the completed-round counter to the slowest live agent.
    let advance = |agent: usize, round: Option<usize>| -> Result<(), RunError> {
        let mut p = progress.lock();
        if let Some(r) = round {
            p.per_agent[agent] = r;
        }
        loop {
            let slowest = {
                let s = shared.run.state();
                (0..cfg.agents).filter(|&i| s.is_live(i)).map(|i| p.per_agent[i]).min()
            };
            match slowest {
                Some(m) if m > p.done => {
                    p.done += 1;
                    shared.round_done(p.done)?;
                }
                _ => return Ok(()),
            }
        }
    };

    std::thread::scope(|s| {
        for &agent in &live {
            let (barrier, handler, failure, advance) = (&barrier, &handler, &failure, &advance);
            s.spawn(move || {
                let fail = |e: RunError| {
                    failure.lock().get_or_insert(e);
                };
                for round in first..=cfg.iterations {
                    if aborted() {
                        break;
                    }
                    control.wait_while_paused();
                    let snap = shared.run.state().clone();
                    let outcome = shared.guarded(&snap, agent, round);
                    match shared.settle(agent, round, outcome) {
                        Ok(Settled::Alive) => {}
                        Ok(Settled::Dead) => {
                            if let Err(e) = advance(agent, None) {
                                fail(e);
                            }
                            barrier.leave();
                            return;
                        }
                        Err(e) => {
                            fail(e);
                            break;
                        }
                    }
                    if let Err(e) = advance(agent, Some(round)) {
                        fail(e);
                        break;
                    }
                    if is_checkpoint(round, cfg.feedback_interval, cfg.iterations) && barrier.arrive() {
                        if !aborted() {
                            let mut h = handler.lock();
                            if let Err(e) = checkpoint(shared.run, &mut **h, round, cfg.feedback_interval) {
                                fail(e);
                            }
                        }
                        barrier.release();
                    }
                }
                barrier.leave();
            });
        }
    });
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
