use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qmeas_cli::{execute, parse_config, with_workers, write_outputs, RunError};

/// Continuous fuzzy measurement simulations.
///
/// The config is a TOML file with a top-level `scenario` (lindblad, chm,
/// sse-ensemble, chain, zeno, rabi-monitor, transition, verify), an optional
/// `seed` (default 1) and sections [model], [grid] and [run].
///
/// [model] defaults: preset "two-level" with level_splitting 2, rabi 1,
/// kappa 1 and psi0 the first basis state. [grid] defaults: t0 0; dt and
/// n_steps depend on the scenario (lindblad, chm 0.01 x 200; sse-ensemble
/// 1e-3 x 2000; chain 500 shots). [run] defaults: n_traj 1000 (zeno 0),
/// stride 10, kappas [0.1, 1, 10, 100], strength 0.1, n_chains 1000,
/// threshold 1e-4, readout 0, transition duration 30, rabi-monitor
/// duration 6400/rabi with 64 segments.
#[derive(Parser, Debug)]
#[command(name = "qmeas", version, verbatim_doc_comment)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "qmeas-out")]
    out: PathBuf,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, env = "QMEAS_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Suppress the summary line.
    #[arg(long)]
    quiet: bool,
}

fn run(args: &Args) -> Result<bool, RunError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| RunError::Io(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = with_workers(args.workers, || execute(&cfg))??;
    write_outputs(&args.out, &out)?;
    if !args.quiet {
        for line in &out.checks {
            println!("{line}");
        }
        println!("{}", out.line);
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
