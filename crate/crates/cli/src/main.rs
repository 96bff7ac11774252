use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;

use embedscope_cli::{analogy, gradcheck, neighbors, serve, train, Cli, Command};

fn run(cli: Cli) -> anyhow::Result<bool> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Train(args) => train(&args, &mut out).map(|_| true),
        Command::Neighbors(args) => neighbors(&args, &mut out).map(|_| true),
        Command::Analogy(args) => analogy(&args, &mut out).map(|_| true),
        Command::Gradcheck(args) => gradcheck(&args, &mut out),
        Command::Serve(args) => {
            drop(out);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(&args)).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
