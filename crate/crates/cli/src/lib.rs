//! The `lacuna` command line and HTTP service.

pub mod args;
pub mod commands;
pub mod engine;
pub mod error;
pub mod input;
pub mod provenance;
pub mod service;

use clap::Parser;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match args::Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli, &argv[1..]) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logs to stderr. The HTTP client crates are capped at `warn`: their
/// trace output would include request headers.
fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .filter_module("ureq", log::LevelFilter::Warn)
        .filter_module("ureq_proto", log::LevelFilter::Warn)
        .try_init();
}
