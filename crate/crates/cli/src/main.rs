use std::process::ExitCode;

use celldet::cli::Cli;
use celldet::commands::execute;
use celldet::config;
use celldet::error::CliError;
use celldet::io::flush_stdout;
use clap::Parser;

fn run(cli: &Cli) -> Result<String, CliError> {
    let (cfg, _) = config::load(cli.config.as_deref(), cli.seed)?;
    let summary = execute(&cli.command, &cfg)?;
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            flush_stdout(&text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("report serializes"));
            ExitCode::from(e.exit_code())
        }
    }
}
