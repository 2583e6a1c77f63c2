//! Command-line runner for drift-flux verification scenarios.
//!
//! `driftflux run <scenario.toml> [--output-dir DIR] [--seed N]` executes
//! the scenario described by the file and writes CSV tables, binary
//! snapshots, and a run manifest to the output directory.

mod artifacts;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;

use driftflux::error::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PRECONDITION: u8 = 3;
pub const EXIT_FAULT: u8 = 4;
pub const EXIT_THRESHOLD: u8 = 5;

const USAGE: &str = "\
Usage: driftflux run <scenario.toml> [--output-dir DIR] [--seed N]

Runs the scenario described by the file and writes its artifacts (CSV
tables, binary snapshots, a run manifest) to the output directory. The
directory is taken from --output-dir if given, else from the
DRIFTFLUX_OUTPUT_ROOT environment variable joined with the scenario's
relative output_dir, else from the scenario file itself.

Exit codes:
  0  clean completion, every scenario threshold met
  2  malformed command line or configuration
  3  precondition rejection (inadmissible parameters or initial data)
  4  solver fault (vacuum, admissibility, step-size bound, nonfinite value)
  5  scenario threshold failure
";

struct Cli {
    scenario: PathBuf,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

fn parse_args(args: &[String]) -> Result<Cli, String> {
    if args.is_empty()
        || args[0] == "--help"
        || args[0] == "-h"
        || args[0] == "help"
    {
        return Err(String::new());
    }
    if args[0] != "run" {
        return Err(format!("unknown command {:?}, expected `run`", args[0]));
    }
    let mut scenario: Option<PathBuf> = None;
    let mut output_dir = None;
    let mut seed = None;
    let mut it = args[1..].iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--output-dir" => {
                let v = it.next().ok_or("--output-dir needs a value")?;
                output_dir = Some(PathBuf::from(v));
            }
            "--seed" => {
                let v = it.next().ok_or("--seed needs a value")?;
                seed = Some(v.parse::<u64>().map_err(|e| format!("--seed: {e}"))?);
            }
            other if other.starts_with('-') => {
                return Err(format!("unknown flag {other:?}"));
            }
            other => {
                if scenario.is_some() {
                    return Err(format!("unexpected extra argument {other:?}"));
                }
                scenario = Some(PathBuf::from(other));
            }
        }
    }
    let scenario = scenario.ok_or("missing scenario file path")?;
    Ok(Cli {
        scenario,
        output_dir,
        seed,
    })
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::Recipe(_) => EXIT_PRECONDITION,
        Error::Solver(_) => EXIT_FAULT,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(c) => c,
        Err(msg) => {
            if msg.is_empty() {
                print!("{USAGE}");
                return ExitCode::from(EXIT_OK);
            }
            eprintln!("error: {msg}");
            eprint!("{USAGE}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match runners::execute(&cli.scenario, cli.output_dir.as_deref(), cli.seed) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
