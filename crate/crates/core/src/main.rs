use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ergolab::cli::{self, Command};

#[derive(Parser)]
#[command(name = "ergolab", version, about = "Exact finite witnesses for slow ergodic averages")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and check a tower-family witness.
    Krengel(RunArgs),
    /// Build and check the stagewise spliced witness.
    Podvigin(RunArgs),
    /// Solve a tower partition instance.
    Alpern(RunArgs),
    /// Re-check a stored witness.
    Verify(RunArgs),
    /// Plot log2(ratio) from a rows CSV.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.cmd {
        Cmd::Krengel(a) => (Command::Krengel, a),
        Cmd::Podvigin(a) => (Command::Podvigin, a),
        Cmd::Alpern(a) => (Command::Alpern, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let result = cli::configure_threads().and_then(|()| cli::run(cmd, &args.config, args.out.as_deref()));
    match result {
        Ok(r) => {
            let v = &r.manifest.verdict;
            if v.pass {
                println!("{}: pass ({} checks) -> {}", cmd.name(), v.checks, r.out_dir.display());
            } else {
                println!(
                    "{}: FAIL: {}",
                    cmd.name(),
                    v.first_failure.as_deref().unwrap_or("unknown failure")
                );
            }
            ExitCode::from(r.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
