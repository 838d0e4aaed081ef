use std::process::ExitCode;

use clap::Parser;
use mlmc_boed_cli::error::CliError;
use mlmc_boed_cli::{commands, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => fail(&CliError::Usage(e.to_string().trim().to_string())),
    };
    match run(&cli).and_then(|s| commands::print_summary(&s)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ! {
    eprintln!("{}", e.to_json());
    std::process::exit(e.exit_code())
}
