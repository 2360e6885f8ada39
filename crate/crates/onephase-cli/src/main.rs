//! Config-driven experiment runner for the one-phase free boundary toolkit.
//!
//! Subcommands:
//!   run <CONFIG>            solve + analyze (+ flatness) + MANIFEST
//!   solve <CONFIG>          solve and write solution artifacts only
//!   analyze <CONFIG>        re-analyze a previously written solution
//!   flatness <CONFIG>       run the improvement-of-flatness cascade
//!   oracle --p --q --b ...  1-D closed-form / brute-force oracles
//!   verify-kernel <CONFIG>  sample the structural conditions
//!
//! Exit codes: 0 success, 1 check failure, 2 config/schema error,
//! 3 solver non-convergence, 4 staging error (missing solution artifacts).

mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use onephase::analysis::extract_free_boundary;

const USAGE: &str = "\
onephase - one-phase free boundary minimizer and verification harness

USAGE:
  onephase run <CONFIG> [--out DIR]
  onephase solve <CONFIG> [--out DIR]
  onephase analyze <CONFIG> [--solution DIR] [--radii R1,R2,...]
  onephase flatness <CONFIG> [--solution DIR] [--center X,Y] [--r0 R]
                    [--rtilde T] [--levels K]
  onephase oracle --p P --q Q --b B [--length L] [--f F] [--m M] [--nodes N]
  onephase verify-kernel <CONFIG>

The config is a flat `key = value` file; see configs/strip_p2.cfg.
ONEPHASE_OUTPUT_ROOT sets the default output root.

Exit codes: 0 ok, 1 failed check, 2 config error, 3 non-convergence,
4 staging error.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    }
    match args[0].as_str() {
        "run" => cmd_run(&args[1..], true),
        "solve" => cmd_run(&args[1..], false),
        "analyze" => cmd_analyze(&args[1..]),
        "flatness" => cmd_flatness(&args[1..]),
        "oracle" => cmd_oracle(&args[1..]),
        "verify-kernel" => cmd_verify_kernel(&args[1..]),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            ExitCode::SUCCESS
        }
        other => {
            eprintln!("unknown subcommand `{other}`\n{USAGE}");
            ExitCode::from(2)
        }
    }
}

fn flag_value<'a>(args: &'a [String], name: &str) -> Option<&'a str> {
    args.iter().position(|a| a == name).and_then(|i| args.get(i + 1)).map(|s| s.as_str())
}

fn load_config(args: &[String]) -> Result<(config::ExperimentConfig, PathBuf), ExitCode> {
    let Some(path) = args.iter().find(|a| !a.starts_with("--")) else {
        eprintln!("missing config path\n{USAGE}");
        return Err(ExitCode::from(2));
    };
    match config::load(Path::new(path)) {
        Ok(cfg) => Ok((cfg, PathBuf::from(path))),
        Err(e) => {
            eprintln!("{e}");
            Err(ExitCode::from(2))
        }
    }
}

fn cmd_run(args: &[String], with_analysis: bool) -> ExitCode {
    let (mut cfg, _) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if !with_analysis {
        cfg.analysis_checks.clear();
        cfg.flatness_enabled = false;
    }
    let dir = flag_value(args, "--out")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone());
    match runner::run(&cfg, &dir) {
        Ok(outcome) => {
            println!("artifacts written to {}", outcome.dir.display());
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("solver did not converge within the sweep budget");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_analyze(args: &[String]) -> ExitCode {
    let (mut cfg, _) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(r) = flag_value(args, "--radii") {
        let mut radii = Vec::new();
        for part in r.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) => radii.push(v),
                Err(e) => {
                    eprintln!("--radii: {e}");
                    return ExitCode::from(2);
                }
            }
        }
        cfg.radii_spec = Some(radii);
    }
    let dir = flag_value(args, "--solution")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone());
    let sol = match runner::load_solution(&cfg, &dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(4);
        }
    };
    let rep = runner::analysis_report(&cfg, &sol);
    let out = dir.join("analysis.json");
    if let Err(e) = std::fs::write(&out, rep.to_json_pretty()) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::from(2);
    }
    println!("{}", rep.to_json_pretty());
    ExitCode::SUCCESS
}

fn cmd_flatness(args: &[String]) -> ExitCode {
    let (mut cfg, _) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(c) = flag_value(args, "--center") {
        let parts: Vec<&str> = c.split(',').collect();
        if parts.len() != 2 {
            eprintln!("--center expects X,Y");
            return ExitCode::from(2);
        }
        match (parts[0].trim().parse(), parts[1].trim().parse()) {
            (Ok(x), Ok(y)) => cfg.flatness_center = Some([x, y]),
            _ => {
                eprintln!("--center expects numbers");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(r) = flag_value(args, "--r0") {
        match r.parse() {
            Ok(v) => cfg.flatness_r0 = Some(v),
            Err(e) => {
                eprintln!("--r0: {e}");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(t) = flag_value(args, "--rtilde") {
        match t.parse() {
            Ok(v) => cfg.flatness_rtilde = v,
            Err(e) => {
                eprintln!("--rtilde: {e}");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(l) = flag_value(args, "--levels") {
        match l.parse() {
            Ok(v) => cfg.flatness_levels = v,
            Err(e) => {
                eprintln!("--levels: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let dir = flag_value(args, "--solution")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone());
    let sol = match runner::load_solution(&cfg, &dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(4);
        }
    };
    let fb = extract_free_boundary(&sol);
    match runner::flatness_json(&cfg, &sol, &fb) {
        Ok(content) => {
            let out = dir.join("flatness.json");
            if let Err(e) = std::fs::write(&out, &content) {
                eprintln!("cannot write {}: {e}", out.display());
                return ExitCode::from(2);
            }
            println!("{content}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("flatness failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_oracle(args: &[String]) -> ExitCode {
    let req = |name: &str| -> Result<f64, ExitCode> {
        match flag_value(args, name) {
            Some(v) => v.parse().map_err(|e| {
                eprintln!("{name}: {e}");
                ExitCode::from(2)
            }),
            None => {
                eprintln!("missing {name}\n{USAGE}");
                Err(ExitCode::from(2))
            }
        }
    };
    let opt = |name: &str, default: f64| -> Result<f64, ExitCode> {
        match flag_value(args, name) {
            Some(v) => v.parse().map_err(|e| {
                eprintln!("{name}: {e}");
                ExitCode::from(2)
            }),
            None => Ok(default),
        }
    };
    let (p, q, b) = match (req("--p"), req("--q"), req("--b")) {
        (Ok(p), Ok(q), Ok(b)) => (p, q, b),
        _ => return ExitCode::from(2),
    };
    let (length, f_const, m) = match (opt("--length", 1.0), opt("--f", 0.0), opt("--m", 1.0)) {
        (Ok(l), Ok(f), Ok(m)) => (l, f, m),
        _ => return ExitCode::from(2),
    };
    let nodes = match flag_value(args, "--nodes") {
        Some(v) => match v.parse::<usize>() {
            Ok(n) => Some(n),
            Err(e) => {
                eprintln!("--nodes: {e}");
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    match runner::oracle_json(p, q, b, length, f_const, m, nodes) {
        Ok(s) => {
            println!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("oracle failed: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_verify_kernel(args: &[String]) -> ExitCode {
    let (cfg, _) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    match runner::verify_kernel_report(&cfg) {
        Ok(rep) => {
            println!("{}", rep.to_json_pretty());
            if rep.flag("all_pass") == Some(true) {
                println!("structural conditions: PASS");
                ExitCode::SUCCESS
            } else {
                println!("structural conditions: FAIL");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("verify-kernel failed: {e}");
            ExitCode::from(2)
        }
    }
}
