use clap::Parser;
use stablelab_cli::{run, CliError, Command, Context, Format};
use std::path::PathBuf;
use std::process::ExitCode;

/// Stable-noise SDE laboratory: heat kernels, Besov drifts, Monte Carlo and
/// parametrix density solvers.
#[derive(Debug, Parser)]
#[command(name = "stablelab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Format of the stdout summary.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let key = e
                .get(clap::error::ContextKind::InvalidArg)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "<arguments>".into());
            let msg = e.kind().to_string();
            eprintln!("{}", serde_json::json!({"error": "config", "key": key, "message": msg}));
            return ExitCode::from(stablelab_cli::EXIT_CONFIG as u8);
        }
    };
    if let Err(e) = stablelab::exec::init_threads(args.threads) {
        eprintln!("{}", serde_json::json!({"error": "config", "key": "--threads", "message": e}));
        return ExitCode::from(stablelab_cli::EXIT_CONFIG as u8);
    }
    let ctx = match Context::load(&args.config, args.seed, args.out) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run(args.command, &ctx) {
        Ok(out) => {
            print!("{}", out.render(args.format));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
