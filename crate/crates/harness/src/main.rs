use afrelay::{load_scenario, run_command, Command, Overrides};
use afrelay_core::algorithms::PrimalAlgorithm;
use clap::{Parser, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Optimize,
    DualityCheck,
    Gradcheck,
    Bench,
}

/// Optimize precoders, check duality certificates and gradients, and
/// benchmark algorithms on multi-hop relay network scenarios.
#[derive(Debug, Parser)]
#[command(name = "afrelay", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed range `a..b` (half-open) or a single seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stopping tolerance (optimize), error threshold (gradcheck) or
    /// objective distance for iterations-to-tolerance (bench).
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap; outer iterations for P1 and P2 problems.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Primal algorithm; a comma-separated list for bench.
    #[arg(long, value_delimiter = ',', value_parser = parse_algo)]
    algo: Vec<PrimalAlgorithm>,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed '{x}': {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a >= b {
                return Err(format!("empty seed range {s}"));
            }
            Ok(SeedList((a..b).collect()))
        }
        None => Ok(SeedList(vec![num(s)?])),
    }
}

fn parse_algo(s: &str) -> Result<PrimalAlgorithm, String> {
    s.parse().map_err(|_| format!("unknown algorithm '{s}' (expected ga, pwf, pwfi or pwf3)"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let command = match cli.command {
        Cmd::Optimize => Command::Optimize,
        Cmd::DualityCheck => Command::DualityCheck,
        Cmd::Gradcheck => Command::Gradcheck,
        Cmd::Bench => Command::Bench,
    };
    let overrides = Overrides { seeds: cli.seeds.map(|s| s.0), out: cli.out, tol: cli.tol, max_iter: cli.max_iter, algos: cli.algo };
    let result = load_scenario(&cli.scenario).and_then(|sc| run_command(&sc, command, &overrides));
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
