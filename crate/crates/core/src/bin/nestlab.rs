use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nestlab::cli::{render_json, run, CliError, Problem, RunOptions, Task};

/// Invariant subspace lattices, reflexivity and factorization for
/// finite-dimensional operator algebras.
#[derive(Debug, Parser)]
#[command(name = "nestlab", version)]
struct Args {
    /// Task to run; overrides the task named in the problem file.
    task: Task,
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, env = "NESTLAB_SEED")]
    seed: Option<u64>,
    /// Relative tolerance for matrix equality.
    #[arg(long)]
    eq_tol: Option<f64>,
    /// Number of random seed vectors used by lattice enumeration.
    #[arg(long)]
    budget: Option<usize>,
    /// Write the JSON report to this file, or to stdout when given `-`.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Suppress the text report.
    #[arg(long)]
    quiet: bool,
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let opts = RunOptions { seed: args.seed, eq_tol: args.eq_tol, budget: args.budget };
    let tol = opts.tolerance()?;
    let path = args.input.display().to_string();
    let text = std::fs::read_to_string(&args.input).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let problem = Problem::parse(&text, &tol)?;
    let report = run(&problem, args.task, &opts)?;
    if !args.quiet {
        print!("{}", report.text);
    }
    if let Some(out) = &args.json {
        let body = render_json(&report.json);
        if out.as_os_str() == "-" {
            print!("{body}");
        } else {
            std::fs::write(out, body).map_err(|source| CliError::Io { path: out.display().to_string(), source })?;
        }
    }
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("nestlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
