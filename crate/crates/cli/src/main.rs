//! `companions`: discover traveling companions from raw trajectories.
//!
//! Subcommands map one-to-one onto pipeline stages; each writes its
//! artifacts and a manifest under the run directory. See the README for
//! the full walkthrough and the config key table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use companions_cli::config::RunConfig;
use companions_cli::stages::{self, ErrorClass, StageError};

#[derive(Parser)]
#[command(name = "companions", version, about = "Traveling-companion discovery pipeline")]
struct Cli {
    /// Plain-text key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable): --set epochs=5
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Run directory for stage artifacts (overrides the `run_dir` key).
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-companion corpus with ground truth and gates.
    Synth {
        /// Output directory (overrides the `synth_out` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load, validate and tokenize the corpus onto the cell grid.
    Ingest,
    /// Pre-train cell embeddings on the token sequences.
    Pretrain,
    /// Pack trajectories into fixed-capacity neighbor groups.
    Pack,
    /// Train the dual autoencoder on the packed groups.
    Train,
    /// Export one encoding per trajectory from the trained model.
    Encode,
    /// Cluster the encodings across the epsilon grid and report metrics.
    Sweep,
    /// Mine convoys on the interpolated corpus.
    BaselineConvoy,
    /// Mine closed swarms on the interpolated corpus.
    BaselineSwarm,
    /// Join sweep output with ground truth; emit tables and charts.
    Report {
        /// Additional runs to compare, as label=run_dir (repeatable).
        #[arg(long = "compare", value_name = "LABEL=DIR")]
        compare: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let cfg = match RunConfig::load(cli.config.as_deref(), &cli.sets) {
        Ok(mut cfg) => {
            if let Some(dir) = &cli.run_dir {
                cfg.set("run_dir", &dir.display().to_string()).expect("run_dir is a known key");
            }
            if let (Command::Synth { out: Some(dir) }, true) = (&cli.command, true) {
                cfg.set("synth_out", &dir.display().to_string()).expect("synth_out is a known key");
            }
            cfg
        }
        Err(err) => {
            eprintln!("error[config]: {err:#}");
            return ExitCode::from(2);
        }
    };

    let result = match &cli.command {
        Command::Synth { .. } => stages::synth(&cfg),
        Command::Ingest => stages::ingest(&cfg),
        Command::Pretrain => stages::pretrain(&cfg),
        Command::Pack => stages::pack(&cfg),
        Command::Train => stages::train_stage(&cfg),
        Command::Encode => stages::encode(&cfg),
        Command::Sweep => stages::sweep(&cfg),
        Command::BaselineConvoy => stages::baseline(&cfg, "convoy"),
        Command::BaselineSwarm => stages::baseline(&cfg, "swarm"),
        Command::Report { compare } => {
            let mut pairs = Vec::new();
            for item in compare {
                match item.split_once('=') {
                    Some((label, dir)) => pairs.push((label.to_string(), PathBuf::from(dir))),
                    None => {
                        eprintln!("error[config]: --compare expects LABEL=DIR, got {item:?}");
                        return ExitCode::from(2);
                    }
                }
            }
            stages::report(&cfg, &pairs)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { class, source }) => {
            let (tag, code) = match class {
                ErrorClass::Config => ("config", 2),
                ErrorClass::MissingArtifact => ("missing-artifact", 3),
                ErrorClass::Runtime => ("runtime", 1),
            };
            eprintln!("error[{tag}]: {source:#}");
            ExitCode::from(code)
        }
    }
}
