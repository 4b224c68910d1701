//! Runs the twelve acceptance experiments at their default sizes with one
//! fixed seed and prints a verdict line per criterion. Reports go to
//! `target/tmp/acceptance/<experiment>/`.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use spatial_trees_harness::{acceptance_suite, run_experiment, ExperimentConfig};

const SEED: u64 = 20261016;

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut failed = 0;
    let suite = acceptance_suite();
    for spec in &suite {
        let cfg = ExperimentConfig::defaults(spec, SEED);
        let start = Instant::now();
        let criterion = spec.criterion.unwrap_or(0);
        match run_experiment(&cfg, Some(&root.join(spec.name))) {
            Ok(r) => {
                if !r.passed {
                    failed += 1;
                }
                println!("criterion {criterion:>2} {}  [{:.1}s]", r.summary(), start.elapsed().as_secs_f64());
            }
            Err(e) => {
                failed += 1;
                println!("criterion {criterion:>2} {}: FAIL (error: {e:#})", spec.name);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", suite.len() - failed, suite.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
