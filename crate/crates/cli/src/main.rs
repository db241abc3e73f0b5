mod args;
mod eval_cmd;
mod forge_cmd;
mod manifest;
mod train_cmd;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err
        .chain()
        .filter_map(|e| e.downcast_ref::<tea_core::Error>())
        .any(|e| e.is_usage());
    if usage || err.downcast_ref::<args::UsageError>().is_some() {
        2
    } else {
        1
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(args::UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Train(a) => train_cmd::run(a),
        Command::Eval(a) => eval_cmd::run(a),
        Command::Forge(a) => forge_cmd::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
