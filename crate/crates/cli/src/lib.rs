//! Command-line workflows: `malt build` constructs the benchmark, and `kbc`
//! runs the pipeline, calibrates the threshold, evaluates and samples facts
//! for annotation.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 backend error, 4 failure
//! tolerance exceeded.

pub mod kbc;
pub mod malt;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use kbc_core::error::{EvalError, PipelineError};
use kbc_core::prompt::RelationRegistry;
use kbc_core::{BackendError, DataError, Execution};
use serde::Serialize;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_TOLERANCE: u8 = 4;

/// An argument combination clap cannot reject on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Exit code for the first error in the chain that has one.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::FailureToleranceExceeded { .. } => EXIT_TOLERANCE,
                PipelineError::Backend { .. } => EXIT_BACKEND,
                PipelineError::Data(_) => EXIT_DATA,
                PipelineError::InvalidArgument(_) => EXIT_USAGE,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
        if cause.is::<BackendError>() {
            return EXIT_BACKEND;
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
    }
    EXIT_DATA
}

/// Parses arguments, sending usage errors to exit code 1 rather than clap's 2.
pub fn parse_args<T: Parser>() -> T {
    T::try_parse().unwrap_or_else(|e| {
        let _ = e.print();
        std::process::exit(if e.use_stderr() { i32::from(EXIT_USAGE) } else { 0 });
    })
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
}

pub fn finish(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

pub fn load_registry(path: Option<&Path>) -> anyhow::Result<RelationRegistry> {
    match path {
        Some(p) => RelationRegistry::from_file(p).with_context(|| format!("loading relations from {}", p.display())),
        None => Ok(RelationRegistry::benchmark()),
    }
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
