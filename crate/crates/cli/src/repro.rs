//! Byte-level reproducibility across worker counts.

use qmeas_core::verify::CheckResult;

use crate::config::parse_config;
use crate::run::{execute, Outputs, RunError};
use crate::with_workers;

/// Small instances of every simulation scenario.
const SCENARIOS: [&str; 7] = [
    "scenario = \"lindblad\"\n[grid]\nn_steps = 50\n",
    "scenario = \"chm\"\n[run]\nreadout = 0.3\n[grid]\nn_steps = 50\n",
    "scenario = \"sse-ensemble\"\n[model]\nkappa = 0.5\n[grid]\nn_steps = 200\n[run]\nn_traj = 300\n",
    "scenario = \"chain\"\n[model]\npsi0 = [[0.6, 0], [0.8, 0]]\n[grid]\nn_steps = 200\n[run]\nn_chains = 300\n",
    "scenario = \"zeno\"\n[run]\nkappas = [0.5, 5]\nn_traj = 130\n",
    "scenario = \"rabi-monitor\"\n[model]\nkappa = 0.05\n[run]\nduration = 400\nsegments = 8\n[grid]\ndt = 0.005\n",
    "scenario = \"transition\"\n[model]\nkappa = 5\n[run]\nduration = 10\n",
];

fn run_with(text: &str, seed: u64, workers: usize) -> Result<Outputs, RunError> {
    let mut cfg = parse_config(text)?;
    cfg.seed = seed;
    with_workers(workers, || execute(&cfg))?
}

/// Runs every scenario with one and with four workers and compares all
/// outputs, including the summary, byte for byte.
pub fn reproducibility_check(seed: u64) -> Result<CheckResult, RunError> {
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for text in SCENARIOS {
        let a = run_with(text, seed, 1)?;
        let b = run_with(text, seed, 4)?;
        compared += a.files.len() + 1;
        if a.files != b.files || a.summary_json() != b.summary_json() {
            mismatches += 1;
        }
    }
    Ok(CheckResult {
        id: 10,
        name: "reproducibility",
        passed: mismatches == 0,
        measured: vec![("scenarios", SCENARIOS.len() as f64), ("files_compared", compared as f64), ("mismatching_scenarios", mismatches as f64)],
    })
}
