use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod demo;
mod games;
mod inspect;

#[derive(Parser)]
#[command(name = "pvckdc", version, about = "Verifiable outsourced computation with a key distribution center")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write its JSONL transcript.
    Demo {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Transcript destination.
        #[arg(long, default_value = "transcript.jsonl")]
        out: PathBuf,
    },
    /// Play a security game against a named adversary strategy.
    Games {
        game: String,
        strategy: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, value_enum, default_value_t = BindingArg::OutputOnly)]
        binding: BindingArg,
        #[arg(long, value_enum, default_value_t = FunctionBindingArg::Shared)]
        function_binding: FunctionBindingArg,
    },
    /// Summarize a JSONL transcript.
    Inspect {
        transcript: PathBuf,
        /// Fail if any line carries data outside the message schemas.
        #[arg(long)]
        assert_no_b_leak: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Standard,
    Manager,
}

#[derive(Clone, Copy, ValueEnum)]
enum BindingArg {
    OutputOnly,
    OutputWithVk,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionBindingArg {
    Shared,
    Tagged,
}

/// Exit codes: 0 success, 1 failed check, 2 bad input.
pub enum Outcome {
    Pass,
    Fail,
    Usage,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        ExitCode::from(match o {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::Usage => 2,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Demo { config, seed, depth, model, out } => {
            let model = model.map(|m| match m {
                ModelArg::Standard => pvckdc::actors::Model::Standard,
                ModelArg::Manager => pvckdc::actors::Model::Manager,
            });
            demo::run(&config, demo::Overrides { seed, depth, model }, &out)
        }
        Command::Games { game, strategy, trials, seed, depth, binding, function_binding } => {
            let binding = match binding {
                BindingArg::OutputOnly => pvckdc::SignatureBinding::OutputOnly,
                BindingArg::OutputWithVk => pvckdc::SignatureBinding::OutputWithVk,
            };
            let function_binding = match function_binding {
                FunctionBindingArg::Shared => pvckdc::FunctionBinding::Shared,
                FunctionBindingArg::Tagged => pvckdc::FunctionBinding::Tagged,
            };
            games::run(&game, &strategy, trials, seed, depth, binding, function_binding)
        }
        Command::Inspect { transcript, assert_no_b_leak } => inspect::run(&transcript, assert_no_b_leak),
    }
    .into()
}
