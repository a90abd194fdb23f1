use clap::error::ErrorKind;
use clap::Parser;

use ringtrace::cli::{execute, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match execute(cli) {
        Ok(()) => {}
        Err(err @ CliError::Usage(_)) => {
            eprintln!("{err}");
            std::process::exit(1);
        }
        Err(err @ CliError::Data(_)) => {
            eprintln!("error: {err}");
            std::process::exit(2);
        }
    }
}
