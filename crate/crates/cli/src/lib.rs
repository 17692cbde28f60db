//! Configuration parsing and scenario dispatch for the `qmeas` binary.

pub mod config;
pub mod repro;
pub mod run;

use std::path::Path;

pub use config::{parse_config, RunConfig, Scenario};
pub use run::{execute, Outputs, RunError};

/// Runs `f` on a dedicated pool of `workers` threads; 0 picks the available
/// parallelism.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Io(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes every output file and summary.json into `dir`.
pub fn write_outputs(dir: &Path, out: &Outputs) -> Result<(), RunError> {
    let io = |e: std::io::Error, p: &Path| RunError::Io(format!("cannot write {}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (name, contents) in &out.files {
        let p = dir.join(name);
        std::fs::write(&p, contents).map_err(|e| io(e, &p))?;
    }
    let p = dir.join("summary.json");
    std::fs::write(&p, out.summary_json()).map_err(|e| io(e, &p))
}
