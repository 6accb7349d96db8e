//! Batch front end for `mrt-core`: config parsing, command dispatch and artifact writers.
//!
//! Exit codes: 0 success, 1 failed verification or unwritable output, 2 config error,
//! 3 solver error.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::fs;
use std::path::{Path, PathBuf};

use mrt_core::{DispersionError, EigError, EvolveError, GridError, ModeError, ProfileError};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) | CliError::Verify(_) => 1,
        }
    }
}

macro_rules! solver_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Solver(e.to_string())
            }
        }
    )*};
}
solver_error!(DispersionError, EvolveError, EigError, ModeError, GridError, ProfileError);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Critical,
    Growth,
    Evolve,
    Cr,
    Verify,
}

/// Worker count: `--threads`, then `MRT_THREADS`, then the config, then rayon's default.
pub fn thread_count(flag: Option<usize>, env: Option<&str>, cfg: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return if n == 0 { Err(CliError::Config("--threads must be >= 1".into())) } else { Ok(Some(n)) };
    }
    if let Some(s) = env {
        return match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("MRT_THREADS must be a positive integer, got {s:?}"))),
        };
    }
    Ok(cfg)
}

/// Parse, validate and run one command, returning a one-line summary.
pub fn run(
    cmd: Command,
    config: Option<&Path>,
    out: Option<&Path>,
    threads: Option<usize>,
    env_threads: Option<&str>,
) -> Result<String, CliError> {
    let cfg = match config {
        Some(path) => Some(RunConfig::load(path)?),
        None if cmd == Command::Verify => None,
        None => return Err(CliError::Config("--config is required".into())),
    };
    let out: PathBuf = match (out, cfg.as_ref().and_then(|c| c.out.as_ref())) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => cfg.as_ref().map(|c| c.base_dir.join(o)).unwrap_or_else(|| o.clone()),
        (None, None) => return Err(CliError::Config("--out is required".into())),
    };
    let n = thread_count(threads, env_threads, cfg.as_ref().and_then(|c| c.threads))?;
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = n {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Solver(format!("thread pool: {e}")))?
    };
    pool.install(|| match (cmd, cfg.as_ref()) {
        (Command::Verify, _) => verify::verify(&out),
        (Command::Critical, Some(c)) => commands::critical(c, &out),
        (Command::Growth, Some(c)) => commands::growth(c, &out),
        (Command::Evolve, Some(c)) => commands::evolve(c, &out),
        (Command::Cr, Some(c)) => commands::cr(c, &out),
        (_, None) => unreachable!("config presence checked above"),
    })
}
