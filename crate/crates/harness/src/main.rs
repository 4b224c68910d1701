//! `stree`: run experiments from the command line.
//!
//! Exit status: 0 when every metric passes, 1 when a metric fails, 2 on a
//! usage or configuration error, 3 when the run itself errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Arg, ArgAction, ArgMatches, Command};
use spatial_trees_harness::{acceptance_suite, find, registry, run_experiment, ConfigError, ExperimentConfig, ExperimentSpec};

fn run_args() -> [Arg; 5] {
    [
        Arg::new("seed").long("seed").value_parser(clap::value_parser!(u64)).help("run seed (default 0, or the config's)"),
        Arg::new("config").long("config").value_name("FILE").help("`key = value` lines overriding the defaults"),
        Arg::new("out").long("out").value_name("DIR").help("write report.json and raw data here"),
        Arg::new("replicas").long("replicas").value_parser(clap::value_parser!(u64)).help("shorthand for --set replicas=N"),
        Arg::new("set").long("set").value_name("KEY=VALUE").action(ArgAction::Append).help("override one key"),
    ]
}

fn cli() -> Command {
    let mut cmd = Command::new("stree")
        .about("Simulations of Brownian spatial trees and their discrete approximations")
        .subcommand_required(true)
        .subcommand(Command::new("list").about("list the acceptance experiments"))
        .subcommand(
            Command::new("params")
                .about("show the keys, defaults and meaning of an experiment's configuration")
                .arg(Arg::new("name").required(true)),
        )
        .subcommand(
            Command::new("run")
                .about("run any registered experiment by name")
                .arg(Arg::new("name").required(true))
                .args(run_args()),
        );
    for spec in registry() {
        cmd = cmd.subcommand(Command::new(spec.name).about(spec.summary).args(run_args()));
    }
    cmd
}

fn configure(spec: &ExperimentSpec, m: &ArgMatches) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            ExperimentConfig::from_text(spec, 0, &text)?
        }
        None => ExperimentConfig::defaults(spec, 0),
    };
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.clone() })?;
        cfg.set(spec, k.trim(), v.trim())?;
    }
    if let Some(r) = m.get_one::<u64>("replicas") {
        cfg.set(spec, "replicas", &r.to_string())?;
    }
    if let Some(s) = m.get_one::<u64>("seed") {
        cfg.seed = *s;
    }
    Ok(cfg)
}

fn execute(spec: &ExperimentSpec, m: &ArgMatches) -> ExitCode {
    let cfg = match configure(spec, m) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let out = m.get_one::<String>("out").map(PathBuf::from);
    match run_experiment(&cfg, out.as_deref()) {
        Ok(report) => {
            println!("{}", report.summary());
            if let Some(dir) = &out {
                println!("report written to {}", dir.join("report.json").display());
            }
            if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<ConfigError>().is_some() { 2 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    match name {
        "list" => {
            for spec in acceptance_suite() {
                println!("{:>2}  {:<22} {}", spec.criterion.unwrap_or(0), spec.name, spec.summary);
            }
            ExitCode::SUCCESS
        }
        "params" | "run" => {
            let wanted = sub.get_one::<String>("name").unwrap();
            let spec = match find(wanted) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if name == "run" {
                return execute(spec, sub);
            }
            for p in spec.params {
                println!("{:<18} {:<14} {}", p.key, if p.default.is_empty() { "\"\"" } else { p.default }, p.doc);
            }
            ExitCode::SUCCESS
        }
        _ => execute(find(name).expect("subcommands come from the registry"), sub),
    }
}
