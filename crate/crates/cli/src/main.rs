mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let class = err
                .chain()
                .find_map(|e| e.downcast_ref::<fieldnet::Error>())
                .map_or("cli", fieldnet::Error::class);
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{class}]: {msg}");
            ExitCode::FAILURE
        }
    }
}
