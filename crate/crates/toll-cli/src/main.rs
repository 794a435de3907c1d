use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toll_cli::commands::{self, CliError, GridKind, Suite};
use toll_core::generator::GenParams;

/// Envy-free edge pricing on cactus graphs.
///
/// Set TOLL_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "toll", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an instance file.
    Check { path: String },
    /// Compute prices and write a solution file.
    Solve {
        path: String,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Generate a random instance.
    Gen {
        #[arg(long, default_value_t = 10)]
        edges: usize,
        #[arg(long, default_value_t = 5)]
        buyers: usize,
        #[arg(long, default_value_t = 8)]
        max_budget: u64,
        #[arg(long, default_value_t = 0.5)]
        cycle_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare the algorithm with the grid oracle on one instance (CSV).
    Compare {
        path: String,
        #[arg(long, value_enum, default_value_t = GridKind::Default)]
        grid: GridKind,
        /// Cap on oracle search nodes.
        #[arg(long, default_value_t = 50_000_000)]
        max_space: u128,
    },
    /// Run a fixed benchmark suite (CSV).
    ///
    /// small: seed,edges,buyers,levels,alg,oracle,ratio,holds over 20 seeded
    /// instances, ratio being oracle/alg. decomp: seed,edges,k,levels,
    /// max_children,max_borders,violations over 50 seeded cacti.
    Bench {
        #[arg(long, value_enum, default_value_t = Suite::Small)]
        suite: Suite,
        #[arg(long)]
        out: Option<String>,
    },
    /// Dump the decomposition and skeletons as JSON.
    Inspect { path: String },
}

fn emit(text: &str, out: Option<&str>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Check { path } => emit(&commands::check(&path)?, None)?,
        Command::Solve { path, out } => {
            let inst = commands::read_instance(&path)?;
            let sol = commands::solve(&inst)?;
            let json = serde_json::to_string_pretty(&sol).expect("serializable") + "\n";
            if out.is_some() {
                println!("revenue {} level {} ({})", sol.revenue, sol.level.map_or("-".into(), |l| l.to_string()), sol.subproblem.as_deref().unwrap_or("-"));
            }
            emit(&json, out.as_deref())?;
        }
        Command::Gen { edges, buyers, max_budget, cycle_prob, seed, out } => {
            emit(&commands::gen(&GenParams { edges, buyers, max_budget, cycle_prob, seed })?, out.as_deref())?
        }
        Command::Compare { path, grid, max_space } => emit(&commands::compare(&path, grid, max_space)?, None)?,
        Command::Bench { suite, out } => {
            let (csv, ok) = commands::bench(suite)?;
            emit(&csv, out.as_deref())?;
            return Ok(ok);
        }
        Command::Inspect { path } => emit(&commands::inspect(&commands::read_instance(&path)?), None)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("TOLL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
