mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DebiasArgs, EmitArgs, EvalArgs, InputArgs, ServeArgs};
use config::{CommonArgs, ConfigError, PipelineArgs, Settings};

#[derive(Parser)]
#[command(name = "debias-forge", version, about = "Probe, mine, intervene on and evaluate gender bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every gender word and write the bias report
    Probe {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Select the k most biased (or k random) samples
    Mine {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Rewrite gender words with a masking method
    Intervene {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Mine, intervene and write the fine-tuning dataset and train config
    EmitFinetune {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        emit: EmitArgs,
    },
    /// StereoSet and CrowS-Pairs scores for a scorer
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Mine, intervene and refit the builtin scorer; report bias before and after
    Debias {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        debias: DebiasArgs,
    },
    /// Serve the builtin scorer over the wire protocol
    ServeBuiltin(ServeArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Probe { common, pipeline } => commands::cmd_probe(&Settings::resolve(&common, &pipeline)?),
        Command::Mine { common, pipeline } => commands::cmd_mine(&Settings::resolve(&common, &pipeline)?),
        Command::Intervene {
            common,
            pipeline,
            input,
        } => commands::cmd_intervene(&Settings::resolve(&common, &pipeline)?, &input),
        Command::EmitFinetune { common, pipeline, emit } => {
            commands::cmd_emit_finetune(&Settings::resolve(&common, &pipeline)?, &emit)
        }
        Command::Eval { common, pipeline, eval } => commands::cmd_eval(&Settings::resolve(&common, &pipeline)?, &eval),
        Command::Debias {
            common,
            pipeline,
            debias,
        } => commands::cmd_debias(&Settings::resolve(&common, &pipeline)?, &debias),
        Command::ServeBuiltin(args) => commands::cmd_serve_builtin(&args),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use debias_forge::Error;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                e if e.is_protocol() => 3,
                Error::InsufficientSamples { .. } => 4,
                Error::MalformedBenchmark(_) | Error::EmptyBenchmark => 5,
                Error::DuplicateForm(_)
                | Error::MalformedRecord { .. }
                | Error::MalformedCorpus { .. }
                | Error::MissingNeutralForm(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
