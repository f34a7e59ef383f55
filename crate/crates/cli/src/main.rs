use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use deepgi_cli::{configure_threads, run, Cli, CliError, THREADS_ENV};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();

    let threads = std::env::var(THREADS_ENV).ok();
    let result = configure_threads(threads.as_deref()).and_then(|n| {
        if let Some(n) = n {
            log::info!("{THREADS_ENV}: using {n} worker threads");
        }
        run(cli)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nUsage: deepgi [--config FILE] <COMMAND> [OPTIONS]; see `deepgi --help`");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
