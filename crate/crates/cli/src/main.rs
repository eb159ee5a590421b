use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordsub_cli::config::RunConfig;
use ordsub_cli::error::CliError;
use ordsub_cli::pipeline::Mode;
use ordsub_cli::{execute, generate, Format};

#[derive(Parser)]
#[command(name = "ordsub", version, about = "Propensity-score subclassification for ordinal exposures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design, balance gate and effect estimation.
    Analyze(RunArgs),
    /// Design and balance diagnostics only, with plot data.
    Audit(RunArgs),
    /// Monte Carlo comparison of estimators on imputed potential outcomes.
    Simulate(RunArgs),
    /// Write a synthetic base population and a matching config.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory receiving `base.csv` and `config.toml`.
    #[arg(long)]
    out: PathBuf,
}

fn set_threads(threads: Option<usize>) {
    let Some(n) = threads else { return };
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        eprintln!("warning: could not configure {n} threads: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    eprintln!("warning: built without the parallel feature; ignoring --threads {n}");
}

fn write_report(out: Option<&Path>, mode: Mode, format: Format, body: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io)?;
            let stem = match mode {
                Mode::Analyze => "analysis",
                Mode::Audit => "audit",
                Mode::Simulate => "simulation",
            };
            let ext = if format == Format::Json { "json" } else { "md" };
            std::fs::write(dir.join(format!("{stem}.{ext}")), body).map_err(io)
        }
        None => std::io::stdout().write_all(body.as_bytes()).map_err(io),
    }
}

fn run_mode(mode: Mode, args: &RunArgs) -> Result<i32, CliError> {
    set_threads(args.threads);
    let (mut config, text) = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let output = execute(mode, &config, &text, args.format)?;
    write_report(args.out.as_deref(), mode, args.format, &output.body)?;
    Ok(output.exit_code)
}

fn run_generate(args: &GenerateArgs) -> Result<i32, CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    std::fs::create_dir_all(&args.out).map_err(io)?;
    let file = std::fs::File::create(args.out.join("base.csv")).map_err(io)?;
    generate::write_base(file, args.n, args.seed)?;
    std::fs::write(args.out.join("config.toml"), generate::base_config("base.csv")).map_err(io)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => run_mode(Mode::Analyze, a),
        Command::Audit(a) => run_mode(Mode::Audit, a),
        Command::Simulate(a) => run_mode(Mode::Simulate, a),
        Command::Generate(g) => run_generate(g),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
