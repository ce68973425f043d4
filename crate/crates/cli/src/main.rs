mod args;
mod common;
mod compute;
mod report;
mod validate;

use std::process::ExitCode;

use clap::Parser;

use cdindex::ErrorClass;

use crate::args::{Cli, Command};
use crate::common::Run;

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Io => 2,
        ErrorClass::Data => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDINDEX_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };

    let (name, result) = match &cli.command {
        Command::Compute(a) => {
            let mut run = Run::new(cli.global.clone(), "compute", argv);
            ("compute", compute::compute(&mut run, a))
        }
        Command::Timeseries(a) => {
            let mut run = Run::new(cli.global.clone(), "timeseries", argv);
            ("timeseries", compute::timeseries(&mut run, a))
        }
        Command::Match(a) => {
            let mut run = Run::new(cli.global.clone(), "match", argv);
            ("match", validate::cem(&mut run, a))
        }
        Command::Did(a) => {
            let mut run = Run::new(cli.global.clone(), "did", argv);
            ("did", validate::did(&mut run, a))
        }
        Command::Stats(a) => {
            let mut run = Run::new(cli.global.clone(), "stats", argv);
            ("stats", report::stats(&mut run, a))
        }
        Command::Generate(a) => {
            let mut run = Run::new(cli.global.clone(), "generate", argv);
            ("generate", report::generate(&mut run, a))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cdindex {name}: error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
