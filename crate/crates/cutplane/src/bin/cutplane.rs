//! Command-line front end: parses flags and dispatches into the harness.
//!
//! Usage:
//!   cutplane <command> --instance <path> [--config <path>] --seed <u64> [--out <dir>]
//!
//! Commands: feasibility, convex, saddle, market-ad, market-fisher,
//! bench-leverage. Exit codes: 0 success, 2 negative certificate or residuals
//! above tolerance, 1 error. Set CUTPLANE_LOG=1 for progress output.

use cutplane::harness::{run_command, CommandArgs};
use std::path::PathBuf;
use std::process::ExitCode;

struct ParsedArgs {
    command: String,
    args: CommandArgs,
}

fn usage() -> String {
    "usage: cutplane <command> --instance <path> [--config <path>] --seed <u64> [--out <dir>]\n\
     commands: feasibility | convex | saddle | market-ad | market-fisher | bench-leverage"
        .to_string()
}

fn parse_args(argv: &[String]) -> Result<ParsedArgs, String> {
    if argv.is_empty() {
        return Err(usage());
    }
    let command = argv[0].clone();
    if command == "--help" || command == "-h" || command == "help" {
        return Err(usage());
    }
    let mut instance: Option<PathBuf> = None;
    let mut config: Option<PathBuf> = None;
    let mut seed: Option<u64> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut i = 1;
    while i < argv.len() {
        let flag = &argv[i];
        let value = argv
            .get(i + 1)
            .ok_or_else(|| format!("flag {flag} needs a value\n{}", usage()))?;
        match flag.as_str() {
            "--instance" => instance = Some(PathBuf::from(value)),
            "--config" => config = Some(PathBuf::from(value)),
            "--seed" => {
                seed =
                    Some(value.parse::<u64>().map_err(|_| {
                        format!("--seed must be an unsigned integer, got '{value}'")
                    })?)
            }
            "--out" => out_dir = Some(PathBuf::from(value)),
            other => return Err(format!("unknown flag '{other}'\n{}", usage())),
        }
        i += 2;
    }
    let instance = instance.ok_or_else(|| format!("--instance is required\n{}", usage()))?;
    // Every command draws randomness from the maintainer seeds, so the seed
    // is mandatory for reproducibility.
    let seed = seed.ok_or_else(|| format!("--seed is required\n{}", usage()))?;
    let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
    Ok(ParsedArgs {
        command,
        args: CommandArgs {
            instance,
            config,
            seed,
            out_dir,
        },
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let parsed = match parse_args(&argv) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    match run_command(&parsed.command, &parsed.args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("cutplane {}: {err}", parsed.command);
            ExitCode::from(1)
        }
    }
}
