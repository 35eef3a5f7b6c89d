use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use qgeo_cli::{run, Cli, CliError};

fn try_main(cli: &Cli) -> anyhow::Result<()> {
    let done = run(cli).with_context(|| "qgeo failed")?;
    for line in &done.summary {
        println!("{line}");
    }
    for f in &done.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match try_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
