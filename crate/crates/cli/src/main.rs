//! `snmnn`: simulate, train, predict, fuse, evaluate, convert and plotdata.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod args;
mod commands;
mod error;

use clap::Parser;

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = commands::run(cli) {
        eprintln!("snmnn: {e}");
        std::process::exit(e.exit_code());
    }
}
