//! `crowd`: command-line front end of `crowd-core`.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 on a data or i/o
//! error. Diagnostics go to standard error as single lines prefixed with
//! `error[usage]:`, `error[data]:` or `warning[validation]:`.

mod args;
mod artifact;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::artifact::{json_bytes, FileDigest, Manifest};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match real_main(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(err)) => {
            eprintln!("error[data]: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main(argv: &[String]) -> Result<(), Failure> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return Err(Failure::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Data(e.into()))?;
    }

    let outcome = run::execute(&cli.command)?;
    let location = artifact::emit(&outcome.target, &outcome.bytes)?;
    let line = format!("{} -> {location}", outcome.summary);
    if outcome.target.path.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }

    if let Some(path) = &cli.manifest {
        let manifest = Manifest {
            tool: "crowd",
            version: env!("CARGO_PKG_VERSION"),
            command: outcome.command,
            args: artifact::reproducible_args(argv),
            settings: outcome.settings,
            inputs: outcome.inputs,
            output: FileDigest::new("output", location, &outcome.bytes),
        };
        let target = artifact::resolve(path);
        let bytes = json_bytes(&manifest)?;
        std::fs::write(&target, bytes)
            .map_err(|e| Failure::Data(anyhow::Error::new(e).context(format!("writing {}", target.display()))))?;
    }
    Ok(())
}
