#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Fixture {
    pub tmp: tempfile::TempDir,
    pub config: PathBuf,
    pub run_dir: PathBuf,
}

pub struct Params<'a> {
    pub seed: u64,
    pub agents: usize,
    pub iterations: usize,
    pub interval: usize,
    pub strategies: &'a [&'a str],
    pub scheduler: &'a str,
}

impl Default for Params<'_> {
    fn default() -> Self {
        Params {
            seed: 1,
            agents: 2,
            iterations: 4,
            interval: 2,
            strategies: &["append-marker"],
            scheduler: "lockstep",
        }
    }
}

pub fn config_text(p: &Params<'_>) -> String {
    let strategies: Vec<String> = p.strategies.iter().map(|s| format!("{s:?}")).collect();
    format!(
        r#"run_dir = "run"

[run]
seed = {seed}
agents = {agents}
iterations = {iterations}
feedback_interval = {interval}
scheduler = "{scheduler}"

[agents]
strategies = [{strategies}]
break_probability = 0.3

[[checks]]
name = "syntax"
argv = ["grep", "-rnH", "@@syntax-error@@", "."]
timeout_secs = 30
parser = "line-regex"
"#,
        seed = p.seed,
        agents = p.agents,
        iterations = p.iterations,
        interval = p.interval,
        scheduler = p.scheduler,
        strategies = strategies.join(", "),
    )
}

/// Writes a config, a small web-project seed and a brief; does not init.
pub fn fixture(p: &Params<'_>) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("evogit.toml");
    std::fs::write(&config, config_text(p)).unwrap();
    let seed = root.join("seed");
    std::fs::create_dir_all(seed.join("src")).unwrap();
    std::fs::write(seed.join("src/index.js"), (1..=40).map(|i| format!("render({i});\n")).collect::<String>()).unwrap();
    std::fs::write(seed.join("src/style.css"), "body { margin: 0; }\nh1 { color: teal; }\n").unwrap();
    std::fs::write(seed.join("README.md"), "# Landing page\n\nA small site.\n").unwrap();
    std::fs::write(root.join("brief.md"), "Build a friendly landing page.\n").unwrap();
    Fixture {
        run_dir: root.join("run"),
        config,
        tmp,
    }
}

impl Fixture {
    pub fn root(&self) -> &Path {
        self.tmp.path()
    }

    pub fn init(&self) -> Output {
        let root = self.root();
        evogit(&[
            "init",
            "--config",
            self.config.to_str().unwrap(),
            "--seed",
            root.join("seed").to_str().unwrap(),
            "--brief",
            root.join("brief.md").to_str().unwrap(),
        ])
    }

    pub fn run(&self, extra: &[&str]) -> Output {
        let mut args = vec!["run", "--config", self.config.to_str().unwrap()];
        args.extend_from_slice(extra);
        evogit(&args)
    }

    pub fn inspect(&self, cmd: &[&str]) -> Output {
        let mut args = vec![cmd[0], "--run-dir", self.run_dir.to_str().unwrap()];
        args.extend_from_slice(&cmd[1..]);
        evogit(&args)
    }
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evogit"));
    c.env("EVOGIT_TEST_MODE", "1").env("RUST_LOG", "error");
    c
}

pub fn evogit(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}
