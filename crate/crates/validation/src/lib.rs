//! Pass/fail bookkeeping for the acceptance target.

use std::time::{Duration, Instant};

use clap::Parser;
use consensus_cli::commands::{run, Cli};
use serde_json::Value;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

pub type Criterion = (u32, &'static str, fn() -> Outcome);

/// Runs every criterion, prints one line each, and returns the failing ids.
pub fn run_criteria(criteria: &[Criterion]) -> Vec<u32> {
    let mut failed = Vec::new();
    for &(id, name, check) in criteria {
        let o = check();
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    failed
}

/// Whether `start` is within `limit`, and a printable elapsed time.
pub fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.2}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

/// Runs a `consensus` command line in-process and returns its JSON report,
/// which `args` must direct to `report` with `--report`.
pub fn cli_report(args: &[&str], report: &std::path::Path) -> Value {
    let cli = Cli::try_parse_from(std::iter::once("consensus").chain(args.iter().copied()))
        .unwrap_or_else(|e| panic!("{args:?}: {e}"));
    run(&cli).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap()
}
