//! Argument parsing and dispatch.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tutor_core::classifier::{Forest, ForestParams, GroupLabel};
use tutor_core::curriculum::Phase;
use tutor_core::service::{Assigner, JsonlDirSink, SystemClock, Tutor};
use tutor_core::sim::PopulationSpec;

use crate::commands;
use crate::config::ServeConfig;
use crate::http;

#[derive(Debug, Parser)]
#[command(name = "tutor", version, about = "Dual-strategy propositional proof tutor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Pretest,
    Training,
    Posttest,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Phase {
        match p {
            PhaseArg::Pretest => Phase::Pretest,
            PhaseArg::Training => Phase::Training,
            PhaseArg::Posttest => Phase::Posttest,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        /// Overrides the listen address from the config file.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run a simulated experiment and write its logs and reports.
    Simulate {
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        /// Overrides the population file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Forest model for classified populations; the rule baseline otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Switch-behavior profiles and tests over a directory of logs.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, value_enum, default_value = "training")]
        phase: PhaseArg,
        /// JSON object mapping session id to group label.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test scores and normalized learning gain per session.
    Grade {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label sessions from their pretest behavior.
    Classify {
        #[arg(long)]
        pretest_logs: PathBuf,
        /// Forest model; the rule baseline otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a forest from logs and a session-to-group JSON file.
    TrainForest {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that every curriculum problem is sound and solvable.
    Validate {
        #[arg(long)]
        curriculum: Option<PathBuf>,
    },
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn load_model(path: Option<&Path>) -> anyhow::Result<Option<Forest>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Forest::from_json(&text).with_context(|| format!("loading model {}", p.display()))
    })
    .transpose()
}

fn assigner(model: Option<Forest>) -> Assigner {
    model.map_or(Assigner::Baseline, |f| Assigner::Forest(Box::new(f)))
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { config, curriculum, listen } => {
            let mut config = match config {
                Some(p) => ServeConfig::load(&p)?,
                None => ServeConfig::default(),
            };
            if let Some(l) = listen {
                config.listen = l;
            }
            serve(config, curriculum.as_deref())?;
        }
        Command::Simulate { population, curriculum, seed, model, out } => {
            let text =
                std::fs::read_to_string(&population).with_context(|| format!("reading {}", population.display()))?;
            let mut spec = PopulationSpec::from_toml(&text)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let curriculum = commands::load_curriculum(curriculum.as_deref())?;
            let doc = commands::simulate(&spec, curriculum, assigner(load_model(model.as_deref())?), &out)?;
            println!("{} sessions written to {}", doc.sessions, out.display());
        }
        Command::Analyze { logs, phase, groups, curriculum, out } => {
            let curriculum = commands::load_curriculum(curriculum.as_deref())?;
            let groups: Option<BTreeMap<String, String>> = groups.as_deref().map(commands::read_json).transpose()?;
            let report = commands::analyze(&commands::read_logs(&logs)?, &curriculum, phase.into(), groups.as_ref())?;
            emit(&report, out.as_deref())?;
        }
        Command::Grade { logs, curriculum, out } => {
            let curriculum = commands::load_curriculum(curriculum.as_deref())?;
            let weights = Default::default();
            emit(&commands::grade(&commands::read_logs(&logs)?, &curriculum, &weights)?, out.as_deref())?;
        }
        Command::Classify { pretest_logs, model, out } => {
            let model = load_model(model.as_deref())?;
            emit(&commands::classify(&commands::read_logs(&pretest_logs)?, model.as_ref())?, out.as_deref())?;
        }
        Command::TrainForest { logs, groups, seed, trees, out } => {
            let groups: BTreeMap<String, GroupLabel> = commands::read_json(&groups)?;
            let params = ForestParams { seed, n_trees: trees, ..Default::default() };
            let forest = commands::train(&commands::read_logs(&logs)?, &groups, params)?;
            std::fs::write(&out, forest.to_json()).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Validate { curriculum } => {
            let curriculum = commands::load_curriculum(curriculum.as_deref())?;
            let (text, ok) = commands::validate(&curriculum);
            print!("{text}");
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn build_tutor(config: &ServeConfig, curriculum: Option<&Path>) -> anyhow::Result<Tutor> {
    let curriculum = Arc::new(commands::load_curriculum(curriculum)?);
    let model = load_model(config.model.as_deref())?;
    let mut tutor = Tutor::new(curriculum, config.tutor.clone(), Arc::new(SystemClock), assigner(model))?;
    if let Some(dir) = &config.log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        tutor = tutor.with_sink(Box::new(JsonlDirSink { dir: dir.clone() }));
    }
    Ok(tutor)
}

fn serve(config: ServeConfig, curriculum: Option<&Path>) -> anyhow::Result<()> {
    let tutor = Arc::new(build_tutor(&config, curriculum)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&config.listen)
            .await
            .with_context(|| format!("binding {}", config.listen))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, http::router(tutor))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
