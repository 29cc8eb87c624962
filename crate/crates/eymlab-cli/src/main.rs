use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eymlab_cli::commands::{self, Format, Output, RunOptions};
use eymlab_cli::config::RunConfig;
use eymlab_cli::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "eymlab", version, about = "Einstein-Yang-Mills deformation-theory lab on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Snapshot file to start from instead of the configured scenario.
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
    /// Report destination (flow: final snapshot). Reports go to stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall time in the report metadata.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Residual, identities, deformation complex and self-adjointness.
    Verify,
    /// Preconditioned flow towards a critical pair; prints the history.
    Flow,
    /// Low end of the deformation Laplacian.
    Spectrum,
    /// Exactness of the principal-symbol sequence.
    Symbol,
    /// Finite-difference oracle for the linearized operators.
    Fdcheck,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let opts = RunOptions {
        input: cli.input.clone(),
        seed: cli.seed,
        format: cli.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }),
        timing: cli.timing,
    };
    match cli.command {
        Command::Verify => commands::verify(&cfg, &opts),
        Command::Flow => commands::flow(&cfg, &opts, cli.out.as_deref()),
        Command::Spectrum => commands::spectrum(&cfg, &opts),
        Command::Symbol => commands::symbol(&cfg, &opts),
        Command::Fdcheck => commands::fdcheck(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report_path = match cli.command {
        Command::Flow => None,
        _ => cli.out.as_deref(),
    };
    match report_path {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &output.text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{}", output.text),
    }
    if output.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
