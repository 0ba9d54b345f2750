use std::process::ExitCode;

use clap::Parser;
use t2i_harness::Cli;

fn main() -> ExitCode {
    // Usage errors exit with 2 from inside `parse`.
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match t2i_harness::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
