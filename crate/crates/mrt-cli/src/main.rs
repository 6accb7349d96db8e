use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mrt_cli::{run, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Critical,
    Growth,
    Evolve,
    Cr,
    Verify,
}

/// Linear stability of magnetic Rayleigh-Taylor and Parker equilibria.
#[derive(Debug, Parser)]
#[command(name = "mrt", version)]
struct Args {
    command: Cmd,
    /// Flat JSON run configuration (optional for verify).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; falls back to the config's "out" key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to MRT_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cmd = match args.command {
        Cmd::Critical => Command::Critical,
        Cmd::Growth => Command::Growth,
        Cmd::Evolve => Command::Evolve,
        Cmd::Cr => Command::Cr,
        Cmd::Verify => Command::Verify,
    };
    let env = std::env::var("MRT_THREADS").ok();
    match run(cmd, args.config.as_deref(), args.out.as_deref(), args.threads, env.as_deref()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mrt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
