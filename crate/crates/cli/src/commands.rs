use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evogit_core::run::{
    export_dot, graph_view, run_population, CheckpointHandler, Config, Headless, Interactive, Population, Run,
    RunControl, RunError, RunOptions, Scripted,
};
use evogit_core::FileTree;

use crate::api::{self, AppState};
use crate::output;

#[derive(Debug, Parser)]
#[command(name = "evogit", version, about = "Multi-agent code evolution over a Git version graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a run directory from a config, a seed tree and a task brief.
    Init {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the seed project.
        #[arg(long)]
        seed: PathBuf,
        /// File containing the task brief.
        #[arg(long)]
        brief: PathBuf,
    },
    /// Run (or resume) the population until the iteration budget is spent.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines checkpoint decisions.
        #[arg(long, conflicts_with = "interactive")]
        feedback: Option<PathBuf>,
        /// Wait at each checkpoint for a decision through the HTTP API.
        #[arg(long, requires = "serve")]
        interactive: bool,
        /// Serve the HTTP API on this localhost port while running.
        #[arg(long)]
        serve: Option<u16>,
    },
    /// Recover the run directory if it is idle, then validate it.
    Status(Target),
    /// Print the active frontier.
    Frontier(Target),
    /// Print the changes from version A to version B.
    Diff {
        #[command(flatten)]
        target: Target,
        a: String,
        b: String,
    },
    /// Export the version graph.
    Export {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API over a run directory (read-only).
    Serve {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 8377)]
        port: u16,
        /// Static UI bundle served for paths outside the API.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

/// Which run to inspect: a run directory, or the config that names one.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Target {
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Target {
    fn dir(&self) -> Result<PathBuf> {
        match (&self.run_dir, &self.config) {
            (Some(d), _) => Ok(d.clone()),
            (None, Some(c)) => Ok(Config::load(c)?.run_dir),
            (None, None) => bail!("pass --run-dir or --config"),
        }
    }

    fn open(&self) -> Result<Run> {
        let dir = self.dir()?;
        Run::open_readonly(&dir, RunOptions::from_env()).with_context(|| format!("opening {}", dir.display()))
    }
}

/// Process exit status of a command that completed.
pub enum Outcome {
    Success,
    ValidationFailed,
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Init { config, seed, brief } => init(&config, &seed, &brief),
        Command::Run {
            config,
            feedback,
            interactive,
            serve,
        } => run(&config, feedback.as_deref(), interactive, serve),
        Command::Status(t) => status(&t),
        Command::Frontier(t) => {
            print!("{}", output::frontier(&t.open()?)?);
            Ok(Outcome::Success)
        }
        Command::Diff { target, a, b } => {
            print!("{}", output::diff(&target.open()?, &a, &b)?);
            Ok(Outcome::Success)
        }
        Command::Export { target, format, output } => {
            let run = target.open()?;
            let text = match format {
                Format::Json => output::graph(&run),
                Format::Dot => export_dot(&graph_view(&run.state())),
            };
            match output {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(Outcome::Success)
        }
        Command::Serve {
            target,
            port,
            static_dir,
        } => {
            let state = AppState {
                run: Arc::new(target.open()?),
                control: None,
            };
            api::serve_blocking(api::router(state, static_dir), port)?;
            Ok(Outcome::Success)
        }
    }
}

fn init(config: &Path, seed: &Path, brief: &Path) -> Result<Outcome> {
    let cfg = Config::load(config).with_context(|| format!("loading {}", config.display()))?;
    let brief_text = std::fs::read_to_string(brief).with_context(|| format!("reading brief {}", brief.display()))?;
    let tree = FileTree::read_dir(seed).with_context(|| format!("reading seed directory {}", seed.display()))?;
    let run = Run::init(&cfg, &tree, &brief_text, RunOptions::from_env())?;
    println!("initialized {} at root {}", run.dir().display(), run.state().root());
    Ok(Outcome::Success)
}

fn run(config: &Path, feedback: Option<&Path>, interactive: bool, serve: Option<u16>) -> Result<Outcome> {
    let cfg = Config::load(config).with_context(|| format!("loading {}", config.display()))?;
    let frozen = Config::load_frozen(&cfg.run_dir)
        .with_context(|| format!("{} is not an initialized run directory", cfg.run_dir.display()))?;
    if !cfg.matches_frozen(&frozen) {
        return Err(RunError::ConfigChanged(cfg.run_dir.clone()).into());
    }
    let run = Arc::new(Run::open(&cfg.run_dir, RunOptions::from_env())?);
    let pop = Population::from_config(&run)?;
    let control = Arc::new(RunControl::new(run.config().run.comment_limit));
    let mut handler: Box<dyn CheckpointHandler> = match (feedback, interactive) {
        (Some(path), _) => Box::new(Scripted::load(path)?),
        (None, true) => Box::new(Interactive::new(control.clone())),
        (None, false) => Box::new(Headless),
    };
    if let Some(port) = serve {
        let router = api::router(
            AppState {
                run: run.clone(),
                control: Some(control.clone()),
            },
            None,
        );
        std::thread::Builder::new()
            .name("api".into())
            .spawn(move || {
                if let Err(e) = api::serve_blocking(router, port) {
                    log::error!("api server stopped: {e:#}");
                }
            })
            .context("starting the api server")?;
    }
    let report = run_population(&run, &pop, handler.as_mut(), &control)?;
    println!(
        "finished {} rounds: {} versions, {} retired, frontier {}",
        report.rounds_completed,
        report.versions,
        report.retired,
        report.final_frontier.len()
    );
    Ok(Outcome::Success)
}

fn status(target: &Target) -> Result<Outcome> {
    let dir = target.dir()?;
    let options = RunOptions::from_env();
    let run = match Run::open(&dir, options) {
        Ok(run) => run,
        Err(RunError::Locked(_)) => {
            log::info!("run is active; validating a read-only snapshot");
            Run::open_readonly(&dir, options)?
        }
        Err(e) => return Err(e).with_context(|| format!("opening {}", dir.display())),
    };
    let report = run.validate();
    print!("{}", output::document(&report));
    Ok(if report.ok {
        Outcome::Success
    } else {
        Outcome::ValidationFailed
    })
}
