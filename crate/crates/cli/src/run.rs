//! Scenario execution. Everything here is pure apart from reading an input
//! record: results come back as named file contents plus a JSON summary, so
//! repeated runs can be compared byte for byte.

use std::fmt;

use qmeas_core::chain::{run_chain_ensemble, run_decoherence_chain, FuzzyKraus, DEFAULT_COLLAPSE_THRESHOLD};
use qmeas_core::chm::{propagate_chm_path, ChmIntegrator, MonitoringModel};
use qmeas_core::experiments::{run_rabi_monitor, run_transition_monitor, run_zeno_scan, DetectorConfig, DrivenTwoLevel, RabiMonitorConfig};
use qmeas_core::export::csv_table;
use qmeas_core::hilbert::{expectation, DensityMatrix};
use qmeas_core::lindblad::{integrate_lindblad, LindbladModel};
use qmeas_core::readout::{constant_record, parse_record, serialize_record};
use qmeas_core::sse::ensemble_average_strided;
use qmeas_core::verify::{run_core_checks, CheckResult};
use serde_json::{json, Map, Value};

use crate::config::{ConfigError, InitialLevel, RunConfig, Scenario};
use crate::repro::reproducibility_check;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(String),
    Core(qmeas_core::Error),
}

impl RunError {
    /// 1 for invalid input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Io(e) => f.write_str(e),
            RunError::Core(e) => e.fmt(f),
        }
    }
}

impl From<qmeas_core::Error> for RunError {
    fn from(e: qmeas_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    /// (file name, contents) in write order.
    pub files: Vec<(String, String)>,
    pub summary: Map<String, Value>,
    /// One-line human summary.
    pub line: String,
    /// Per-check report lines of a verify run.
    pub checks: Vec<String>,
    /// False when a verify check failed.
    pub passed: bool,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Self {
        let mut summary = Map::new();
        summary.insert("scenario".into(), json!(cfg.scenario.name()));
        summary.insert("seed".into(), json!(cfg.seed));
        Outputs { files: Vec::new(), summary, line: String::new(), checks: Vec::new(), passed: true }
    }

    fn put(&mut self, key: &str, value: Value) {
        self.summary.insert(key.into(), value);
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }

    /// summary.json contents.
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary is plain JSON");
        s.push('\n');
        s
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outputs, RunError> {
    let mut out = Outputs::new(cfg);
    match cfg.scenario {
        Scenario::Lindblad => lindblad(cfg, &mut out)?,
        Scenario::Chm => chm(cfg, &mut out)?,
        Scenario::SseEnsemble => sse_ensemble(cfg, &mut out)?,
        Scenario::Chain => chain(cfg, &mut out)?,
        Scenario::Zeno => zeno(cfg, &mut out)?,
        Scenario::RabiMonitor => rabi(cfg, &mut out)?,
        Scenario::Transition => transition(cfg, &mut out)?,
        Scenario::Verify => verify(cfg, &mut out)?,
    }
    out.put("passed", json!(out.passed));
    Ok(out)
}

fn driven(cfg: &RunConfig) -> Result<DrivenTwoLevel, RunError> {
    Ok(DrivenTwoLevel::new(cfg.model.level_splitting, cfg.model.rabi, cfg.model.kappa)?)
}

fn lindblad(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let m = &cfg.model;
    let model = LindbladModel::new(m.h.clone(), m.a.clone(), m.kappa)?;
    let grid = cfg.grid(0.01, 200)?;
    let traj = integrate_lindblad(&model, &DensityMatrix::from_state(&m.psi0), &grid)?;
    let last = traj.last();
    out.file("lindblad.csv", traj.to_csv());
    out.put("final_purity", json!(last.purity()));
    out.put("final_expectation_a", json!(last.expectation(&m.a)?));
    out.put("max_trace_drift", json!(traj.max_trace_drift));
    out.put("max_hermiticity_defect", json!(traj.max_hermiticity_defect));
    out.line = format!("lindblad: {} steps to t={}, final purity {:.6}", grid.n_steps(), grid.time(grid.n_steps()), last.purity());
    Ok(())
}

fn chm(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let m = &cfg.model;
    let model = MonitoringModel::new(m.h.clone(), m.a.clone(), m.kappa)?;
    let record = match &cfg.run.record {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("cannot read record {}: {e}", path.display())))?;
            parse_record(&text, cfg.dt)?
        }
        None => constant_record(cfg.grid(0.01, 200)?, cfg.run.readout.unwrap_or(0.0))?,
    };
    let run = propagate_chm_path(&model, &m.psi0, &record, &ChmIntegrator::default())?;
    let fin = run.final_state();
    out.file("chm.csv", run.to_csv());
    out.file("record.csv", serialize_record(&record));
    out.put("log_density", json!(run.density.log_density));
    out.put("final_log_norm", json!(fin.log_norm()));
    out.put("final_expectation_a", json!(expectation(&fin.normalized(), &m.a)?));
    out.line = format!("chm: {} steps, log-density {:.6}", record.grid().n_steps(), run.density.log_density);
    Ok(())
}

fn sse_ensemble(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let m = &cfg.model;
    let model = MonitoringModel::new(m.h.clone(), m.a.clone(), m.kappa)?;
    let grid = cfg.grid(1e-3, 2000)?;
    let n_traj = cfg.run.n_traj.unwrap_or(1000);
    let stride = cfg.run.stride.unwrap_or(10);
    let ens = ensemble_average_strided(&model, &m.psi0, &grid, n_traj, cfg.seed, stride)?;
    let reference = integrate_lindblad(&model.lindblad(), &DensityMatrix::from_state(&m.psi0), &grid)?;
    let sampled: Vec<DensityMatrix> = ens.sample_steps.iter().map(|&k| reference.states[k].clone()).collect();
    let mut worst = 0.0_f64;
    for (rho, r) in ens.mean_rho.iter().zip(&sampled) {
        worst = worst.max(qmeas_core::hilbert::trace_distance(rho, r)?);
    }
    out.file("sse_ensemble.csv", ens.to_csv(&model, Some(&sampled))?);
    out.put("n_traj", json!(n_traj));
    out.put("samples", json!(ens.sample_steps.len()));
    out.put("max_trace_distance_to_lindblad", json!(worst));
    out.line = format!("sse-ensemble: {n_traj} trajectories, max trace distance to Lindblad {worst:.4}");
    Ok(())
}

fn chain(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let m = &cfg.model;
    let k = FuzzyKraus::new(m.a.clone(), cfg.run.strength.unwrap_or(0.1))?;
    let n_steps = cfg.n_steps.unwrap_or(500);
    let n_chains = cfg.run.n_chains.unwrap_or(1000);
    let threshold = cfg.run.threshold.unwrap_or(DEFAULT_COLLAPSE_THRESHOLD);
    let single = run_decoherence_chain(&k, &m.psi0, n_steps, cfg.seed, threshold)?;
    let ens = run_chain_ensemble(&k, &m.psi0, n_steps, n_chains, cfg.seed, threshold)?;
    let dim = m.a.dim();
    let mut header = vec!["shot".to_string()];
    header.extend((0..dim).map(|i| format!("mean_p_{i}")));
    header.extend((0..dim).map(|i| format!("se_p_{i}")));
    let rows = (0..ens.mean_populations.len()).map(|s| {
        let mut row = vec![s as f64];
        row.extend_from_slice(&ens.mean_populations[s]);
        row.extend((0..dim).map(|i| ens.standard_error(s, i)));
        row
    });
    out.file("chain.csv", single.to_csv());
    out.file("chain_ensemble.csv", csv_table(&header, rows));
    let freqs: Vec<f64> = ens.collapse_counts.iter().map(|&c| c as f64 / n_chains as f64).collect();
    out.put("collapse_frequencies", json!(freqs));
    out.put("initial_populations", json!(k.populations(&m.psi0)));
    out.put("uncollapsed", json!(ens.uncollapsed));
    out.put("single_chain_collapsed_to", json!(single.collapsed_to));
    out.line = format!("chain: {n_chains} chains of up to {n_steps} shots, collapse frequencies {freqs:?}, {} uncollapsed", ens.uncollapsed);
    Ok(())
}

fn zeno(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let system = driven(cfg)?;
    let kappas = cfg.run.kappas.clone().unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]);
    let scan = run_zeno_scan(&system, &kappas, cfg.run.n_traj.unwrap_or(0), cfg.seed)?;
    out.file("zeno.csv", scan.to_csv());
    out.put("kappas", json!(scan.kappa_values));
    out.put("transfer", json!(scan.transfer_probabilities));
    if !scan.sse_transfer.is_empty() {
        out.put("sse_transfer", json!(scan.sse_transfer));
    }
    out.put("monotone", json!(scan.monotone));
    let p = &scan.transfer_probabilities;
    out.line = format!(
        "zeno: {} kappa values, transfer {:.4} -> {:.4}, {}",
        p.len(),
        p[0],
        p[p.len() - 1],
        if scan.monotone { "monotone" } else { "not monotone" }
    );
    Ok(())
}

fn rabi(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let system = driven(cfg)?;
    let mut rc = RabiMonitorConfig::for_system(&system, cfg.seed)?;
    if let Some(d) = cfg.run.duration {
        rc.duration = d;
    }
    if let Some(dt) = cfg.dt {
        rc.dt = dt;
    }
    if let Some(s) = cfg.run.segments {
        rc.segments = s;
    }
    let res = run_rabi_monitor(&system, &rc)?;
    out.file("spectrum.csv", res.spectrum_csv());
    out.put("line_frequency", json!(res.line_frequency));
    out.put("peak_frequency", json!(res.peak_frequency));
    out.put("peak_ratio", json!(res.peak_ratio));
    out.put("detected", json!(res.detected));
    out.put("warning", json!(res.warning));
    out.line = format!(
        "rabi-monitor: peak at {:.5} (line {:.5}), ratio {:.3}, {}",
        res.peak_frequency,
        res.line_frequency,
        res.peak_ratio,
        if res.detected { "detected" } else { "not detected" }
    );
    Ok(())
}

fn transition(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let system = driven(cfg)?;
    let mut det = DetectorConfig::for_system(&system)?;
    if let Some(w) = cfg.run.window {
        det.window = w;
    }
    let initial = match cfg.run.initial.unwrap_or(InitialLevel::Ground) {
        InitialLevel::Ground => system.ground(),
        InitialLevel::Excited => system.excited(),
    };
    let duration = cfg.run.duration.unwrap_or(30.0);
    let res = run_transition_monitor(&system, &initial, duration, cfg.dt.unwrap_or(1e-3), cfg.seed, &det)?;
    out.file("transition_record.csv", res.record_csv());
    out.file("transitions.csv", res.transitions_csv());
    let times: Vec<f64> = res.transitions.iter().map(|t| t.time).collect();
    out.put("transition_times", json!(times));
    out.put("upward", json!(res.upward_count()));
    out.put("warning", json!(res.warning));
    out.line = format!("transition: {} transitions ({} upward) in t={duration}", times.len(), res.upward_count());
    Ok(())
}

fn checks_csv(checks: &[CheckResult]) -> String {
    let mut s = String::from("id,name,passed,quantity,value\n");
    for c in checks {
        for (k, v) in &c.measured {
            s.push_str(&format!("{},{},{},{},{}\n", c.id, c.name, c.passed, k, v));
        }
    }
    s
}

fn verify(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let mut checks = run_core_checks(cfg.seed)?;
    checks.push(reproducibility_check(cfg.seed)?);
    out.passed = checks.iter().all(|c| c.passed);
    out.checks = checks.iter().map(CheckResult::line).collect();
    out.file("verify.csv", checks_csv(&checks));
    let list: Vec<Value> = checks
        .iter()
        .map(|c| {
            let measured: Map<String, Value> = c.measured.iter().map(|(k, v)| ((*k).to_string(), json!(v))).collect();
            json!({ "id": c.id, "name": c.name, "passed": c.passed, "measured": measured })
        })
        .collect();
    out.put("checks", Value::Array(list));
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
    out.line = if failed.is_empty() {
        format!("verify: all {} checks passed", checks.len())
    } else {
        format!("verify: {}/{} checks passed; failed: {}", checks.len() - failed.len(), checks.len(), failed.join(", "))
    };
    Ok(())
}
