mod args;
mod commands;
mod files;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hsic::Error),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Core(e) => e.code(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.code() {
            "E_USAGE" | "E_CONFIG" => 2,
            "E_NUMERIC" => 4,
            _ => 3,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.threads)))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a.out, &a.opts, a.seed).map(drop),
        Command::Filter(a) => commands::filter(&a.input, &a.out, &a.opts).map(drop),
        Command::Extract(a) => commands::extract(&a.input, &a.out, &a.opts).map(drop),
        Command::Train(a) => commands::train_step(&a.features, &a.labels, &a.model, &a.gallery, &a.opts, a.seed).map(drop),
        Command::Classify(a) => commands::classify(&a).map(drop),
        Command::Eval(a) => commands::eval(&a).map(drop),
        Command::Pipeline(a) => commands::pipeline(&a).map(drop),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: E_USAGE: {first} (see `hsic --help`)");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {detail}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
