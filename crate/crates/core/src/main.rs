use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use harqbuf::cli::{emit_csv, execute, parse_spec, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "harqbuf",
    version,
    about = "HARQ throughput under a finite receiver buffer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a spec that describes a single configuration point.
    Run(RunArgs),
    /// Evaluate every point of a spec's parameter grid.
    Sweep(RunArgs),
    /// Parse and check a spec without running it.
    Validate { spec: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    /// Override the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's number of sessions per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output CSV path; `-` writes to stdout. Defaults to the spec's
    /// `output`, or stdout when it has none.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &PathBuf) -> Result<ExperimentSpec, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_spec(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(args: RunArgs, single: bool) -> Result<bool, String> {
    let mut spec = load(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(trials) = args.trials {
        if trials == 0 {
            return Err("--trials must be positive".into());
        }
        spec.trials = trials;
    }
    let points = spec.point_count();
    if single && points > 1 {
        return Err(format!(
            "{}: spec expands to {points} configuration points; use `harqbuf sweep`",
            args.spec.display()
        ));
    }
    let outcome = execute(&spec, args.workers).map_err(|e| e.to_string())?;
    for f in &outcome.failures {
        eprintln!("point failed: {f}");
    }
    let dest = args.out.or(spec.output.clone());
    match dest {
        Some(p) if p.as_os_str() != "-" => {
            let file = fs::File::create(&p).map_err(|e| format!("{}: {e}", p.display()))?;
            emit_csv(&outcome.table, std::io::BufWriter::new(file)).map_err(|e| e.to_string())?;
            eprintln!("wrote {} rows to {}", outcome.table.rows.len(), p.display());
        }
        _ => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit_csv(&outcome.table, &mut lock).map_err(|e| e.to_string())?;
            lock.flush().map_err(|e| e.to_string())?;
        }
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args, true),
        Command::Sweep(args) => run(args, false),
        Command::Validate { spec } => load(&spec).map(|s| {
            println!(
                "{}: {} with {} configuration point(s)",
                spec.display(),
                s.kind.as_str(),
                s.point_count()
            );
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
