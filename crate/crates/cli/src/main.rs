use std::process::ExitCode;

use ccs_cli::{emit, exit_code, run, Cli, EXIT_VERIFY};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|(output, out)| {
        emit(&output, out.as_ref())?;
        Ok(output.failed)
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
