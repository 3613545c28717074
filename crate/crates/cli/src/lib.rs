//! Command-line front end for the deferral-scheduling toolkit.
//!
//! Five subcommands cover the library surface: `solve` (planner policy and
//! regime diagnostics, optionally cross-checked against the grid oracle),
//! `nash` (equilibrium strategy and landmarks, optionally certified by an
//! exact best response), `simulate` (one Monte Carlo run), `sweep` (cost
//! and price-of-anarchy curves over arrival rates), and `validate` (the
//! analytic-versus-brute-force check battery).
//!
//! Every command renders to CSV (default) or JSON via `--format`, writing
//! to stdout or `--out`. Exit codes are part of the contract: 0 on
//! success, 1 when a run or a validation check fails, 2 on bad
//! configuration.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod validate;

pub use args::{Cli, Command, Format};
pub use error::CliError;
pub use output::{fmt_sig, Table};

use crate::commands::Rendered;
use crate::output::write_artifact;

/// Caps the rayon pool from `DEFERSCHED_THREADS` before any parallel work.
///
/// Absent means "let rayon decide"; present it must parse to a positive
/// thread count. A pool that was already built (as in tests that call this
/// twice) is left alone.
pub fn apply_thread_cap() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DEFERSCHED_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("DEFERSCHED_THREADS=`{raw}` is not a number")))?;
    if threads == 0 {
        return Err(CliError::config("DEFERSCHED_THREADS must be at least 1"));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("warning: thread cap ignored, pool already running: {e}");
    }
    Ok(())
}

/// Dispatches one parsed invocation and writes its artifact.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(args) => render(commands::cmd_solve(args)?, args.output.format, args.output.out.as_deref()),
        Command::Nash(args) => render(commands::cmd_nash(args)?, args.output.format, args.output.out.as_deref()),
        Command::Simulate(args) => render(commands::cmd_simulate(args)?, args.output.format, args.output.out.as_deref()),
        Command::Sweep(args) => render(commands::cmd_sweep(args)?, args.output.format, args.output.out.as_deref()),
        Command::Validate(args) => {
            let params = defersched_core::model::ModelParams::new(args.p, args.psi, args.d)
                .map_err(|e| CliError::config(e.to_string()))?;
            let lines = validate::run_checks(&params, args.grid, args.tol)?;
            let mut text = String::new();
            for line in &lines {
                text.push_str(&line.to_string());
                text.push('\n');
            }
            write_artifact(&text, args.out.as_deref())?;
            let failed = validate::failures(&lines);
            if failed > 0 {
                return Err(CliError::ChecksFailed { failed, total: lines.len() });
            }
            Ok(())
        }
    }
}

fn render(rendered: Rendered, format: Format, out: Option<&std::path::Path>) -> Result<(), CliError> {
    let text = match format {
        Format::Csv => rendered.table.to_csv_string()?,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rendered.json)
                .expect("command artifacts are plain JSON trees");
            s.push('\n');
            s
        }
    };
    write_artifact(&text, out)
}
