//! `cagkit`: run the CAG dataset pipeline stage by stage.
//!
//! Exit status is 0 on success, 1 when a stage fails and 2 for usage or
//! configuration errors.

mod config;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use cagkit_service::ServiceConfig;
use clap::{Parser, Subcommand};

use crate::config::{ConfigError, PipelineConfig};
use crate::pipeline::{split_file, Stage, StageError, CANDIDATES, CORPUS};

#[derive(Debug, Parser)]
#[command(name = "cagkit", version, about = "CAG key-frame and report dataset pipeline")]
struct Cli {
    /// Pipeline config file.
    #[arg(long, global = true, default_value = "cagkit.toml")]
    config: PathBuf,
    /// Overrides split.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-video stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Decode cines and record per-frame statistics.
    Ingest,
    /// Pick still-frame candidates at intensity extrema.
    Sample,
    /// Classify candidates and select key frames.
    Classify,
    /// Assign key frames to train/val/test by video and by exam.
    Split,
    /// Pair key frames with reports and export the corpus.
    Corpus,
    /// Score generated reports from embedding files.
    Vlscore,
    /// Render summary tables from the artifacts.
    Report,
    /// Serve the annotation and review API over the corpus.
    Serve,
    /// Run ingest through report in order.
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError::Config(e)) => {
            eprintln!("error[config]: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", stage_name(cli.command));
            ExitCode::from(1)
        }
    }
}

fn stage_name(c: Command) -> &'static str {
    match c {
        Command::Ingest => "ingest",
        Command::Sample => "sample",
        Command::Classify => "classify",
        Command::Split => "split",
        Command::Corpus => "corpus",
        Command::Vlscore => "vlscore",
        Command::Report => "report",
        Command::Serve => "serve",
        Command::All => "all",
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
    }
    if let Some(out) = &cli.out {
        // Flags are relative to the working directory, not the config.
        config.out = std::path::absolute(out).map_err(|e| ConfigError::Invalid(format!("--out: {e}")))?;
    }
    config.validate()?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(ConfigError::Invalid("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| ConfigError::Invalid(format!("--workers: {e}")))?;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let config = load_config(cli)?;
    let stage = Stage::new(&config)?;
    let steps: &[Command] = match cli.command {
        Command::All => &[
            Command::Ingest,
            Command::Sample,
            Command::Classify,
            Command::Split,
            Command::Corpus,
            Command::Vlscore,
            Command::Report,
        ],
        ref c => std::slice::from_ref(c),
    };
    for step in steps {
        run_step(&stage, *step)?;
    }
    Ok(())
}

fn run_step(stage: &Stage, command: Command) -> Result<(), StageError> {
    match command {
        Command::Ingest => {
            let records = stage.ingest()?;
            let frames: usize = records.iter().map(|r| r.frames).sum();
            eprintln!("ingest: {} videos, {frames} frames", records.len());
        }
        Command::Sample => {
            let sets = stage.sample()?;
            let n: usize = sets.iter().map(|s| s.selected.len()).sum();
            eprintln!("sample: {n} candidates from {} videos", sets.len());
        }
        Command::Classify => {
            let (preds, keyframes) = stage.classify()?;
            eprintln!("classify: {} predictions, {} key frames", preds.len(), keyframes.len());
        }
        Command::Split => {
            for w in stage.split(stage.config.split.seed)? {
                eprintln!("warning: {w}");
            }
        }
        Command::Corpus => {
            let records = stage.corpus()?;
            let complete = records.iter().filter(|r| r.complete).count();
            eprintln!("corpus: {} records, {complete} complete", records.len());
        }
        Command::Vlscore => {
            let summary = stage.vlscore()?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("vlscore: {} groups", summary.summaries.len());
        }
        Command::Report => {
            report::run(stage)?;
            eprintln!("report: wrote {} and {}", report::TABLES, report::REPORT);
        }
        Command::Serve => serve(stage)?,
        Command::All => unreachable!("expanded by run"),
    }
    Ok(())
}

fn serve(stage: &Stage) -> Result<(), StageError> {
    let section = &stage.config.service;
    let optional = |name: &str| Some(stage.path(name)).filter(|p| p.exists());
    let config = ServiceConfig {
        bind: section.bind.clone(),
        corpus: stage.path(CORPUS),
        frame_root: stage.out.clone(),
        split_manifest: optional(&split_file(stage.config.split.export)),
        candidates: optional(CANDIDATES),
        store_dir: stage.config.resolve(&section.store),
        tokens: section.tokens.clone(),
        snapshot_every: section.snapshot_every,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| StageError::Io {
        path: "tokio runtime".into(),
        reason: e.to_string(),
    })?;
    runtime
        .block_on(async {
            let handle = cagkit_service::serve(config).await?;
            eprintln!("serve: listening on http://{}", handle.local_addr());
            handle.run_until_ctrl_c().await
        })
        .map_err(|e| StageError::Service(e.to_string()))
}
