use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use defog_cli::commands::{
    cmd_defog, cmd_eval, cmd_recompose, cmd_synth, cmd_train, DEFOG_KEYS, EVAL_KEYS,
    RECOMPOSE_KEYS, SYNTH_KEYS, TRAIN_KEYS,
};
use defog_cli::config::{keys_help, RunConfig};

/// Desk-scale video defogging experiments: synthesize calibrated foggy
/// datasets, restore them, and benchmark the results.
#[derive(Parser)]
#[command(name = "defog", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a foggy/clear dataset at calibrated contrast anchors.
    #[command(after_help = keys_help(SYNTH_KEYS))]
    Synth(CommonArgs),
    /// Regroup tagged stop-motion slices into constant-condition videos.
    #[command(after_help = keys_help(RECOMPOSE_KEYS))]
    Recompose(CommonArgs),
    /// Restore foggy sequences with dcp or tcvd.
    #[command(after_help = keys_help(DEFOG_KEYS))]
    Defog(CommonArgs),
    /// Train the CNN+Transformer defogger.
    #[command(after_help = keys_help(TRAIN_KEYS))]
    Train(CommonArgs),
    /// Score restored sequences and emit the SSIM/PSNR report.
    #[command(after_help = keys_help(EVAL_KEYS))]
    Eval(CommonArgs),
}

type CommandFn = fn(&RunConfig) -> Result<(), defog_cli::CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (keys, args, run): (_, _, CommandFn) =
        match &cli.command {
            Command::Synth(args) => (SYNTH_KEYS, args, cmd_synth),
            Command::Recompose(args) => (RECOMPOSE_KEYS, args, cmd_recompose),
            Command::Defog(args) => (DEFOG_KEYS, args, cmd_defog),
            Command::Train(args) => (TRAIN_KEYS, args, cmd_train),
            Command::Eval(args) => (EVAL_KEYS, args, cmd_eval),
        };
    let result = RunConfig::load(keys, args.config.as_deref(), &args.set).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
