mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{CliError, Outcome};
use config::Config;
use oversight_core::pipeline::AnswerVariant;
use oversight_core::service::AssistanceMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "oversight", version, about = "Build question corpora, prepare assisted answers, serve rating tasks and analyse studies")]
struct Cli {
    /// Study configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Question corpus operations.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Answer generation without the assistance stages.
    Answers {
        #[command(subcommand)]
        action: AnswersAction,
    },
    /// Full answer, keypoint, evidence and assistance pipeline.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Serve rating tasks over HTTP.
    Serve {
        #[arg(long, value_name = "shown|hidden")]
        assistance: Option<AssistanceMode>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Build the study report from the event log.
    Analyze {
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Detection rates on seeded-issue items.
    Validate,
    /// Write the event log of a seeded synthetic study.
    Simulate {
        #[arg(long, value_name = "shown|hidden")]
        assistance: Option<AssistanceMode>,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Filter, label and stratify-sample the configured question file.
    Build {
        #[arg(long)]
        per_cell: Option<usize>,
    },
}

#[derive(Subcommand)]
enum AnswersAction {
    Generate {
        #[arg(long, value_name = "basic|dimension_aware")]
        variant: Option<AnswerVariant>,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    Run {
        #[arg(long, value_name = "basic|dimension_aware")]
        variant: Option<AnswerVariant>,
    },
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(CliError::Config)?,
        None => Config::default(),
    };
    if let Some(dir) = &cli.out_dir {
        config.out_dir = std::env::current_dir().map(|cwd| cwd.join(dir)).unwrap_or_else(|_| dir.clone());
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if config.analysis.report.seed != 0 {
        return Err(CliError::Config("set the report seed with the top-level `seed` key".into()));
    }
    Ok(config)
}

fn run(cli: &Cli, config: &Config) -> (&'static str, Result<Outcome, CliError>) {
    match &cli.command {
        Command::Corpus { action: CorpusAction::Build { per_cell } } => {
            let mut config = config.clone();
            if let Some(n) = per_cell {
                config.corpus.per_cell = *n;
            }
            let result = if config.corpus.per_cell == 0 {
                Err(CliError::Config("--per-cell must be at least 1".into()))
            } else {
                commands::corpus_build(&config, config.seed)
            };
            ("corpus build", result)
        }
        Command::Answers { action: AnswersAction::Generate { variant } } => {
            ("answers generate", commands::answers_generate(config, variant.unwrap_or(config.pipeline.variant)))
        }
        Command::Pipeline { action: PipelineAction::Run { variant } } => {
            ("pipeline run", commands::pipeline_run(config, variant.unwrap_or(config.pipeline.variant)))
        }
        Command::Serve { assistance, bind } => {
            ("serve", commands::serve(config, assistance.unwrap_or(config.study.assistance), bind.as_deref()))
        }
        Command::Analyze { resamples } => ("analyze", commands::analyze(config, config.seed, *resamples)),
        Command::Validate => ("validate", commands::validate(config)),
        Command::Simulate { assistance } => ("simulate", commands::simulate(config, cli.seed, *assistance)),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (name, result) = run(&cli, &config);
    commands::write_status(&config.out_dir(), name, &result);
    match result {
        Ok(Outcome { failure: None, .. }) => ExitCode::SUCCESS,
        Ok(Outcome { failure: Some(f), .. }) => {
            eprintln!("error[subcommand_failed]: {name}: {f}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error[{}]: {name}: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
