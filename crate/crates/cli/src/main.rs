use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rafen_core::pipeline::{Pipeline, RunConfig, RunManifest, Stage};
use rafen_core::Error;

/// Dynamic graph embedding with snapshot alignment.
#[derive(Parser, Debug)]
#[command(name = "rafen", version, about)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "rafen.json")]
    config: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Parse the edge list and write a summary.
    Ingest,
    /// Split into snapshots.
    Snapshot,
    /// Train vanilla and RAFEN embeddings.
    Embed,
    /// Procrustes-align vanilla embeddings.
    AlignPosthoc,
    /// Combine snapshot embeddings.
    Aggregate,
    /// Link prediction on the last snapshot.
    Evaluate,
    /// Previous/next snapshot study from stored embeddings.
    StudyPrevnext,
    /// All stages.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_path(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunManifest, Error> {
    let cfg = load_config(cli)?;
    let mut pipeline = Pipeline::new(cfg)?;
    match cli.command {
        Command::Ingest => pipeline.run(Stage::Ingest),
        Command::Snapshot => pipeline.run(Stage::Snapshot),
        Command::Embed => pipeline.run(Stage::Embed),
        Command::AlignPosthoc => pipeline.run(Stage::AlignPosthoc),
        Command::Aggregate => pipeline.run(Stage::Aggregate),
        Command::Evaluate => pipeline.run(Stage::Evaluate),
        Command::StudyPrevnext => pipeline.study_from_disk(),
        Command::Pipeline => pipeline.run(Stage::StudyPrevnext),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error [setup]: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(manifest) => {
            let out = manifest.config.output_dir.display();
            log::info!("wrote {} files under {out}", manifest.files.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (stage, cause) = match &e {
                Error::Stage { stage, source } => (*stage, source.as_ref()),
                other => ("config", other),
            };
            eprintln!("error [{stage}]: {cause}");
            let mut source = std::error::Error::source(cause);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
