//! The `specmon` command line: corpus generation, ingestion, training,
//! evaluation, classification and checkpoint inspection.

pub mod args;
pub mod commands;
pub mod exit;
pub mod manifest;

use std::ffi::OsString;

pub use args::{parse_args, Command, UsageError};

/// Environment variable capping the worker threads of parallel stages.
pub const THREADS_ENV: &str = "SPECMON_THREADS";

/// Runs a parsed command and returns its exit status. Diagnostics go to stderr.
pub fn execute(cmd: &Command) -> i32 {
    match commands::run(cmd) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit::code(&e)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Some(value) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .to_str()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Full entry point: argument parsing, thread configuration, execution.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cmd = match parse_args(argv) {
        Ok(cmd) => cmd,
        Err(e) if e.is_informational() => {
            print!("{e}");
            return exit::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", e.to_string().trim_end());
            return exit::USAGE;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return exit::CONFIG;
    }
    execute(&cmd)
}
