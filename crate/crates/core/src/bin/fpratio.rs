use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fpratio::config::Config;
use fpratio::experiment::{self, Command, Invocation};
use fpratio::Error;

/// Sample diffusion transition densities through a PDE-computed density
/// ratio.
#[derive(Parser)]
#[command(name = "fpratio", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write a max-normalised copy of the field.
    #[arg(long)]
    normalized: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the ratio PDE and write the field.
    SolveRatio(Common),
    /// Sample paths through the rejection pipeline.
    Sample(Common),
    /// PDE against closed-form ratio over a sweep of β (O-U only).
    ValidateOu(Common),
    /// Convergence studies on problems with known solutions.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Problem id; repeatable. All problems when omitted.
        #[arg(long = "problem")]
        problems: Vec<String>,
    },
    /// KS comparison of accepted samples with a reference distribution.
    McCompare(Common),
    /// Re-run the invocation recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn invocation(command: Command, c: &Common, problems: Vec<String>) -> Result<Invocation, Error> {
    let config = match &c.config {
        Some(path) => {
            let mut cfg = Config::from_file(path)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            Some(cfg)
        }
        None if command == Command::Convergence => None,
        None => return Err(Error::MissingKey("--config".into())),
    };
    Ok(Invocation {
        command,
        config,
        normalized: c.normalized,
        problems,
    })
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Error> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "--jobs",
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<experiment::Manifest, Error> {
    let (inv, out, jobs) = match cli.command {
        Cmd::SolveRatio(c) => (invocation(Command::SolveRatio, &c, vec![])?, c.out, c.jobs),
        Cmd::Sample(c) => (invocation(Command::Sample, &c, vec![])?, c.out, c.jobs),
        Cmd::ValidateOu(c) => (invocation(Command::ValidateOu, &c, vec![])?, c.out, c.jobs),
        Cmd::McCompare(c) => (invocation(Command::McCompare, &c, vec![])?, c.out, c.jobs),
        Cmd::Convergence { common, problems } => {
            (invocation(Command::Convergence, &common, problems)?, common.out, common.jobs)
        }
        Cmd::Replay { manifest, out, jobs } => {
            set_jobs(jobs)?;
            return experiment::replay(&manifest, &out);
        }
    };
    set_jobs(jobs)?;
    experiment::run(&inv, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(m) => {
            let files: Vec<&String> = m.files.keys().collect();
            println!("{}", json!({ "status": "ok", "files": files }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = json!({
                "status": "error",
                "kind": e.kind(),
                "key": e.key(),
                "message": e.to_string(),
            });
            eprintln!("{body}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
