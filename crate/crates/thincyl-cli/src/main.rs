//! `thincyl`: command-line front end for the thin-cylinder pipeline.
//!
//! Every failure ends in exactly one stderr line of `key=value` fields:
//!
//! ```text
//! thincyl: error kind=dependency exit=4 command=assemble message="..."
//! ```

mod artifacts;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thincyl::assemble::Order;
use thincyl::model::{load_config, ModelConfig};
use thincyl::Error;

use stages::Ctx;

#[derive(Parser)]
#[command(name = "thincyl", version, about = "Asymptotic approximation of transport in thin cylinders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the modelling assumptions on samples.
    Validate(Opts),
    /// Solve the limit problem for w0.
    Limit(Opts),
    /// Build the cell correctors u1, w1 (and u2 for --order full).
    Cell(Opts),
    /// Build and check the boundary-layer terms.
    Layers(Opts),
    /// Assemble the approximation and check the boundary fit per epsilon.
    Assemble(Opts),
    /// Run the direct axisymmetric solver per epsilon.
    Reference(Opts),
    /// Run the epsilon sweep and fit convergence slopes.
    Study(Opts),
    /// Manufactured-solution self-test of the reference solver.
    Mms(Opts),
}

#[derive(Args)]
struct Opts {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for reports and the artifact cache.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Approximation order.
    #[arg(long, default_value = "first")]
    order: Order,
    /// Comma-separated epsilon list, replacing the config's.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Péclet exponent, replacing the config's.
    #[arg(long, value_name = "X")]
    beta: Option<f64>,
    /// Limit grid as NX,NT, replacing the config's.
    #[arg(long, value_name = "NX,NT", value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Worker threads for per-epsilon runs.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Name study reports by scenario only.
    #[arg(long)]
    no_timestamp: bool,
    /// Run missing upstream stages instead of failing.
    #[arg(long)]
    pipeline: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Limit(_) => "limit",
            Command::Cell(_) => "cell",
            Command::Layers(_) => "layers",
            Command::Assemble(_) => "assemble",
            Command::Reference(_) => "reference",
            Command::Study(_) => "study",
            Command::Mms(_) => "mms",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Validate(o)
            | Command::Limit(o)
            | Command::Cell(o)
            | Command::Layers(o)
            | Command::Assemble(o)
            | Command::Reference(o)
            | Command::Study(o)
            | Command::Mms(o) => o,
        }
    }
}

fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Parse { .. } => ("parse", 2),
        Error::Config(_) => ("config", 2),
        Error::Numeric(_) => ("numeric", 3),
        Error::Compatibility { .. } => ("compatibility", 3),
        Error::Dependency(_) => ("dependency", 4),
        Error::Io(_) => ("io", 3),
    }
}

fn diagnostic(kind: &str, code: u8, command: &str, message: &str) {
    let msg = serde_json::to_string(message).unwrap_or_else(|_| "\"?\"".into());
    eprintln!("thincyl: error kind={kind} exit={code} command={command} message={msg}");
}

fn read_config(path: &Path, o: &Opts) -> thincyl::Result<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
    let mut cfg = load_config(&text)?;
    if let Some(e) = &o.epsilons {
        cfg.epsilons = e.clone();
    }
    if let Some(b) = o.beta {
        cfg.beta = b;
    }
    if let Some(g) = &o.grid {
        if g.len() != 2 {
            return Err(Error::Config("--grid expects NX,NT".into()));
        }
        cfg.grid.nx = g[0];
        cfg.grid.nt = g[1];
    }
    cfg.rebind()?;
    Ok(cfg)
}

fn run(cmd: &Command) -> thincyl::Result<Vec<PathBuf>> {
    let o = cmd.opts();
    if o.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let ctx = Ctx {
        cfg: read_config(&o.config, o)?,
        out: o.out.clone(),
        order: o.order,
        jobs: o.jobs,
        timestamp: !o.no_timestamp,
        pipeline: o.pipeline,
    };
    std::fs::create_dir_all(&ctx.out)?;
    let mut files = vec![];
    if ctx.pipeline && !matches!(cmd, Command::Validate(_) | Command::Mms(_)) {
        files.extend(stages::validate(&ctx)?);
    }
    files.extend(match cmd {
        Command::Validate(_) => stages::validate(&ctx)?,
        Command::Limit(_) => stages::limit(&ctx)?.1,
        Command::Cell(_) => stages::cell(&ctx)?.2,
        Command::Layers(_) => stages::layers(&ctx)?.1,
        Command::Assemble(_) => stages::assemble_stage(&ctx)?,
        Command::Reference(_) => stages::reference(&ctx)?,
        Command::Study(_) => stages::study(&ctx)?,
        Command::Mms(_) => stages::mms(&ctx)?,
    });
    Ok(files)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            diagnostic("usage", 2, "-", line);
            return ExitCode::from(2);
        }
    };
    match run(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = classify(&e);
            diagnostic(kind, code, cli.command.name(), &e.to_string());
            ExitCode::from(code)
        }
    }
}
