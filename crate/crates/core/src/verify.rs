//! Cross-method acceptance checks. Each check runs a fixed scenario, compares
//! it against an independent reference and reports the measured numbers.

use crate::chain::{fit_effective_quadratic, postselected_log_operator, run_chain_ensemble, AncillaScheme, FuzzyKraus, DEFAULT_COLLAPSE_THRESHOLD};
use crate::chm::{generalized_unitarity_defect, marginalize_readouts, ode_propagator, propagate_chm, sliced_propagator, MonitoringModel};
use crate::error::Result;
use crate::experiments::{run_rabi_monitor, run_zeno_scan, DrivenTwoLevel, RabiMonitorConfig};
use crate::hilbert::{c64, trace_distance, CMatrix, DensityMatrix, HermitianOperator, QuantumState};
use crate::lindblad::{integrate_lindblad, LindbladModel};
use crate::quadrature::GaussHermite;
use crate::readout::{constant_record, TimeGrid};
use crate::sse::ensemble_average_strided;

/// Seed used by the stochastic checks unless another is given.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// Named measured quantities, in report order.
    pub measured: Vec<(&'static str, f64)>,
}

impl CheckResult {
    /// `[PASS] 3 generalized unitarity: max_defect=1.2e-15`
    pub fn line(&self) -> String {
        let values: Vec<String> = self.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        format!("[{}] {} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, values.join(" "))
    }
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn plus_state() -> QuantumState {
    QuantumState::from_slice(&[c64(1.0, 0.0), c64(1.0, 0.0)]).expect("non-zero")
}

/// Pure dephasing: |ρ01| must decay at (κ/2)(Δa)² = 1 for κ = 0.5, A = σz.
pub fn dephasing_rate() -> Result<CheckResult> {
    let model = LindbladModel::new(HermitianOperator::zero(2)?, HermitianOperator::pauli_z(), 0.5)?;
    let grid = TimeGrid::new(0.0, 0.01, 400)?;
    let traj = integrate_lindblad(&model, &DensityMatrix::from_state(&plus_state()), &grid)?;
    let t = grid.times();
    let y: Vec<f64> = traj.states.iter().map(|r| r.matrix()[(0, 1)].norm().ln()).collect();
    let rate = -fit_slope(&t, &y);
    let expected = 0.5 * 0.5 * 4.0;
    Ok(CheckResult {
        id: 1,
        name: "dephasing rate",
        passed: (rate / expected - 1.0).abs() <= 0.005,
        measured: vec![("rate", rate), ("expected", expected)],
    })
}

/// H = σx, A = σz, κ = 0.5, T = 2 from |0⟩: SSE ensemble and readout-averaged
/// selective evolution against the Lindblad equation.
pub fn three_way_equivalence(n_traj: usize, seed: u64) -> Result<CheckResult> {
    let (h, a, kappa) = (HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
    let lindblad = LindbladModel::new(h.clone(), a.clone(), kappa)?;
    let monitoring = MonitoringModel::new(h, a, kappa)?;
    let psi0 = QuantumState::basis(2, 0)?;
    let rho0 = DensityMatrix::from_state(&psi0);

    let fine = TimeGrid::new(0.0, 1e-3, 2000)?;
    let reference = integrate_lindblad(&lindblad, &rho0, &fine)?;
    let ensemble = ensemble_average_strided(&monitoring, &psi0, &fine, n_traj, seed, 10)?;
    let mut sse_distance = 0.0_f64;
    for (rho, &k) in ensemble.mean_rho.iter().zip(&ensemble.sample_steps) {
        sse_distance = sse_distance.max(trace_distance(rho, &reference.states[k])?);
    }

    let coarse = TimeGrid::new(0.0, 0.01, 200)?;
    let coarse_reference = integrate_lindblad(&lindblad, &rho0, &coarse)?;
    let marginal = marginalize_readouts(&monitoring, &rho0, &coarse, 40)?;
    let mut chm_distance = 0.0_f64;
    for (rho, r) in marginal.iter().zip(&coarse_reference.states) {
        chm_distance = chm_distance.max(trace_distance(rho, r)?);
    }
    Ok(CheckResult {
        id: 2,
        name: "three-way equivalence",
        passed: sse_distance <= 0.02 && chm_distance <= 1e-3,
        measured: vec![("sse_max_trace_distance", sse_distance), ("chm_max_trace_distance", chm_distance)],
    })
}

/// Completeness of the single-step readout operators at quadrature order 40.
pub fn generalized_unitarity() -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for a in [HermitianOperator::pauli_z(), HermitianOperator::diagonal(&[0.0, 1.0, 3.0])?] {
        for kappa in [0.1, 1.0, 10.0] {
            let model = MonitoringModel::new(HermitianOperator::zero(a.dim())?, a.clone(), kappa)?;
            for dt in [0.01, 0.1] {
                worst = worst.max(generalized_unitarity_defect(&model, dt, 40)?);
            }
        }
    }
    Ok(CheckResult { id: 3, name: "generalized unitarity", passed: worst <= 1e-8, measured: vec![("max_defect", worst)] })
}

/// First-order convergence of the sliced propagator towards the
/// complex-Hamiltonian ODE propagator for H = σx, A = σz, κ = 1, a ≡ 0.5,
/// T = 1. With a ≡ 0 the two factors commute because σz² = I.
pub fn slicing_convergence() -> Result<CheckResult> {
    let model = MonitoringModel::new(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 1.0)?;
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let n = (1.0 / dt as f64).round() as usize;
        let record = constant_record(TimeGrid::new(0.0, dt, n)?, 0.5)?;
        let sliced = sliced_propagator(&model, &record)?;
        let substeps = (dt / 1e-4).round() as usize;
        let reference = ode_propagator(&model, &record, substeps)?;
        errors.push(max_abs(&(sliced.matrix().matrix() - reference.matrix())));
    }
    let slope = log_log_slope(&dts, &errors);
    Ok(CheckResult {
        id: 4,
        name: "slicing convergence",
        passed: (slope - 1.0).abs() <= 0.1,
        measured: vec![("slope", slope), ("error_at_dt_0.0125", errors[3])],
    })
}

/// ∫ da exp(log-density) over the family of constant single-step records.
pub fn single_step_normalization(model: &MonitoringModel, psi: &QuantumState, dt: f64, order: usize) -> Result<f64> {
    let gh = GaussHermite::new(order)?;
    let spectrum = model.observable_spectrum();
    let center = 0.5 * (spectrum.values[0] + spectrum.values[spectrum.values.len() - 1]);
    let scale = (2.0 * model.kappa() * dt).sqrt();
    let mut total = 0.0;
    for (x, w) in gh.unweighted() {
        let record = constant_record(TimeGrid::new(0.0, dt, 1)?, center + x / scale)?;
        let (_, density) = propagate_chm(model, psi, &record)?;
        total += w / scale * density.log_density.exp();
    }
    Ok(total)
}

pub fn density_normalization() -> Result<CheckResult> {
    let two = MonitoringModel::new(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5)?;
    let psi2 = QuantumState::from_slice(&[c64(0.6, 0.0), c64(0.0, 0.8)])?;
    let h3 = HermitianOperator::new(CMatrix::from_row_slice(
        3,
        3,
        &[c64(0.3, 0.), c64(0.5, 0.2), c64(0., 0.), c64(0.5, -0.2), c64(-0.1, 0.), c64(0.4, 0.), c64(0., 0.), c64(0.4, 0.), c64(0.2, 0.)],
    ))?;
    let three = MonitoringModel::new(h3, HermitianOperator::diagonal(&[-1.0, 0.0, 2.0])?, 1.0)?;
    let psi3 = QuantumState::from_slice(&[c64(0.5, 0.0), c64(0.5, 0.5), c64(0.0, 0.5)])?;
    let d2 = (single_step_normalization(&two, &psi2, 0.01, 60)? - 1.0).abs();
    let d3 = (single_step_normalization(&three, &psi3, 0.005, 60)? - 1.0).abs();
    Ok(CheckResult {
        id: 5,
        name: "density normalization",
        passed: d2.max(d3) <= 1e-6,
        measured: vec![("deviation_two_level", d2), ("deviation_three_level", d3)],
    })
}

/// 5000 fuzzy-measurement chains (A = σz, s = 0.1 per shot, 500 shots)
/// from 0.6|+1⟩ + 0.8|−1⟩.
pub fn collapse_statistics(n_chains: usize, seed: u64) -> Result<CheckResult> {
    let k = FuzzyKraus::new(HermitianOperator::pauli_z(), 0.1)?;
    let psi0 = QuantumState::from_slice(&[c64(0.6, 0.0), c64(0.8, 0.0)])?;
    let n_steps = 500;
    let ens = run_chain_ensemble(&k, &psi0, n_steps, n_chains, seed, DEFAULT_COLLAPSE_THRESHOLD)?;
    // Ascending spectrum: index 1 is the +1 eigenvalue.
    let up = 1;
    let born = 0.36;
    let freq = ens.collapse_counts[up] as f64 / n_chains as f64;
    let sigma = (born * (1.0 - born) / n_chains as f64).sqrt();
    let mut drift = 0.0_f64;
    for shot in [1, 5, n_steps / 10, n_steps / 2, n_steps] {
        let se = ens.standard_error(shot, up);
        drift = drift.max((ens.mean_populations[shot][up] - born).abs() / se);
    }
    Ok(CheckResult {
        id: 6,
        name: "collapse statistics",
        passed: (freq - born).abs() <= 3.0 * sigma && drift <= 3.0 && ens.uncollapsed == 0,
        measured: vec![
            ("collapse_frequency", freq),
            ("binomial_sigma", sigma),
            ("max_martingale_drift_se", drift),
            ("uncollapsed", ens.uncollapsed as f64),
        ],
    })
}

/// Transfer at t = π/Ω for κ ∈ {0.1, 1, 10, 100}, Ω = 1, ΔE = 2.
pub fn zeno_effect() -> Result<CheckResult> {
    let system = DrivenTwoLevel::new(2.0, 1.0, 1.0)?;
    let scan = run_zeno_scan(&system, &[0.1, 1.0, 10.0, 100.0], 0, DEFAULT_SEED)?;
    let p = &scan.transfer_probabilities;
    Ok(CheckResult {
        id: 7,
        name: "zeno effect",
        passed: scan.monotone && p[3] < 0.1 && p[0] > 0.95,
        measured: vec![
            ("transfer_kappa_0.1", p[0]),
            ("transfer_kappa_1", p[1]),
            ("transfer_kappa_10", p[2]),
            ("transfer_kappa_100", p[3]),
            ("monotone", if scan.monotone { 1.0 } else { 0.0 }),
        ],
    })
}

/// Rabi line in the readout periodogram: present at κ = 0.05, absent at
/// κ = 5 (Ω = 1, ΔE = 2).
pub fn rabi_visualization(seed: u64) -> Result<CheckResult> {
    let soft = DrivenTwoLevel::new(2.0, 1.0, 0.05)?;
    let frozen = soft.with_kappa(5.0)?;
    let soft_run = run_rabi_monitor(&soft, &RabiMonitorConfig::for_system(&soft, seed)?)?;
    let frozen_run = run_rabi_monitor(&frozen, &RabiMonitorConfig::for_system(&frozen, seed)?)?;
    Ok(CheckResult {
        id: 8,
        name: "rabi visualization",
        passed: soft_run.detected && !frozen_run.detected,
        measured: vec![
            ("soft_peak_ratio", soft_run.peak_ratio),
            ("soft_peak_offset_hz", soft_run.peak_frequency - soft_run.line_frequency),
            ("frozen_peak_ratio", frozen_run.peak_ratio),
            ("frozen_peak_offset_hz", frozen_run.peak_frequency - frozen_run.line_frequency),
        ],
    })
}

/// Post-selected ancilla series for A = diag(−1, 0, 2) at n·g² = 1: the
/// quadratic-fit residual must scale as g² and κ_eff must match n·g²/(2T).
pub fn weak_series_universality() -> Result<CheckResult> {
    let a = HermitianOperator::diagonal(&[-1.0, 0.0, 2.0])?;
    let duration = 1.0;
    let gs = [0.1, 0.05, 0.025, 0.0125];
    let mut residuals = Vec::with_capacity(gs.len());
    let mut worst_kappa = 0.0_f64;
    for &g in &gs {
        let scheme = AncillaScheme::new(g, (1.0 / (g * g) as f64).round() as usize)?;
        let phi = postselected_log_operator(&scheme, &a)?;
        let fit = fit_effective_quadratic(&phi, &a, duration)?;
        residuals.push(fit.residual);
        worst_kappa = worst_kappa.max((fit.kappa_eff / scheme.predicted_kappa(duration) - 1.0).abs());
    }
    let slope = log_log_slope(&gs, &residuals);
    Ok(CheckResult {
        id: 9,
        name: "weak-series universality",
        passed: (slope - 2.0).abs() <= 0.3 && worst_kappa <= 0.05,
        measured: vec![("residual_slope", slope), ("max_kappa_relative_error", worst_kappa), ("residual_smallest_g", residuals[3])],
    })
}

/// Checks 1–9 with the acceptance parameters.
pub fn run_core_checks(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        dephasing_rate()?,
        three_way_equivalence(2000, seed)?,
        generalized_unitarity()?,
        slicing_convergence()?,
        density_normalization()?,
        collapse_statistics(5000, seed)?,
        zeno_effect()?,
        rabi_visualization(seed)?,
        weak_series_universality()?,
    ])
}
