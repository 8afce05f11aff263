mod cli;
mod commands;
mod config;
mod error;
mod output;

use clap::Parser;

use crate::cli::Cli;
use crate::commands::Context;
use crate::error::CliError;

fn main() {
    std::process::exit(match real_main() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    });
}

fn real_main() -> Result<(), CliError> {
    let argv = config::merge_config(config::args_as_strings(std::env::args_os())?)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    let ctx = Context {
        arguments: config::recorded_arguments(&argv),
    };
    commands::run(&cli.command, &ctx)
}
