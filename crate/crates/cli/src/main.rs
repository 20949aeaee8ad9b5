use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use larm_cli::{parse_config, run_pipeline, run_subcommand, CliError, ConfigError, PipelineConfig, Subcommand, Workspace};
use larm_nnkit::NnError;
use larm_ranking::RankingError;
use larm_retrieval::RetrievalError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    TrainRetrieval,
    EvalRetrieval,
    BuildCodebooks,
    Quantize,
    TrainRanking,
    EvalRanking,
    Report,
    /// Every stage in order, then the report.
    Run,
}

#[derive(Debug, Parser)]
#[command(name = "larm", version, about = "Synthetic live-streaming recommendation pipeline")]
struct Args {
    command: Command,
    /// Config file of key = value lines with [section] headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed for every stage.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "larm-out")]
    out: PathBuf,
    /// Restricts a model stage to one variant (e.g. gated_fusion, user_codes, raw, fused, none).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    quiet: bool,
}

fn is_numeric(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref(), Some(CliError::NonFiniteMetric(_)))
            || matches!(c.downcast_ref(), Some(RetrievalError::NonFinite(_) | RetrievalError::Nn(NnError::NonFinite(_))))
            || matches!(c.downcast_ref(), Some(RankingError::NonFinite(_) | RankingError::Nn(NnError::NonFinite(_))))
            || matches!(c.downcast_ref(), Some(NnError::NonFinite(_)))
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| matches!(c.downcast_ref(), Some(CliError::Usage(_)))) {
        1
    } else if is_numeric(e) {
        3
    } else {
        2
    }
}

fn run(args: Args) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => parse_config(path).map_err(|e: ConfigError| anyhow::anyhow!(e).context(format!("config {}", path.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let cmd = match args.command {
        Command::Run => {
            if args.variant.is_some() {
                return Err(CliError::Usage("run takes no --variant".into()).into());
            }
            let report = run_pipeline(&config, &args.out, args.quiet)?;
            print!("{}", report.text);
            return Ok(());
        }
        Command::Simulate => Subcommand::Simulate,
        Command::TrainRetrieval => Subcommand::TrainRetrieval,
        Command::EvalRetrieval => Subcommand::EvalRetrieval,
        Command::BuildCodebooks => Subcommand::BuildCodebooks,
        Command::Quantize => Subcommand::Quantize,
        Command::TrainRanking => Subcommand::TrainRanking,
        Command::EvalRanking => Subcommand::EvalRanking,
        Command::Report => Subcommand::Report,
    };
    let ws = Workspace::new(config, &args.out, args.quiet)?;
    if let Some(text) = run_subcommand(&ws, cmd, args.variant.as_deref())? {
        print!("{text}");
        if !text.ends_with('\n') {
            println!();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
