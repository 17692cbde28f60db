//! Energy-monitoring scenarios for a resonantly driven two-level system:
//! Zeno freezing, visualization of Rabi oscillations in the readout and
//! detection of level transitions.
//!
//! The model lives in the frame rotating with the drive: H = (Ω/2)σx and
//! the monitored observable is H0 = diag(−ΔE/2, +ΔE/2), ground state first.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::chm::MonitoringModel;
use crate::error::{Error, Result};
use crate::export::csv_table;
use crate::hilbert::{trace_distance, HermitianOperator, QuantumState};
use crate::lindblad::{integrate_lindblad, LindbladModel};
use crate::readout::{ReadoutRecord, TimeGrid};
use crate::sse::{ensemble_average_strided, simulate_record, MAX_STEP_STIFFNESS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivenTwoLevel {
    pub level_splitting: f64,
    pub rabi: f64,
    pub kappa: f64,
}

impl DrivenTwoLevel {
    /// Ω = 0 is accepted for undriven reference runs.
    pub fn new(level_splitting: f64, rabi: f64, kappa: f64) -> Result<Self> {
        if !(level_splitting > 0.0 && level_splitting.is_finite()) {
            return Err(Error::InvalidParameter("level splitting must be positive".into()));
        }
        if !(rabi >= 0.0 && rabi.is_finite()) {
            return Err(Error::InvalidParameter("Rabi frequency must be non-negative".into()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        Ok(Self { level_splitting, rabi, kappa })
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.level_splitting, self.rabi, kappa)
    }

    /// H0 = diag(−ΔE/2, +ΔE/2).
    pub fn h0(&self) -> HermitianOperator {
        let half = 0.5 * self.level_splitting;
        HermitianOperator::diagonal(&[-half, half]).expect("2x2 diagonal")
    }

    /// (Ω/2)σx.
    pub fn hamiltonian(&self) -> HermitianOperator {
        HermitianOperator::pauli_x().scaled(0.5 * self.rabi)
    }

    pub fn monitoring_model(&self) -> MonitoringModel {
        MonitoringModel::new(self.hamiltonian(), self.h0(), self.kappa).expect("validated parameters")
    }

    pub fn lindblad_model(&self) -> LindbladModel {
        LindbladModel::new(self.hamiltonian(), self.h0(), self.kappa).expect("validated parameters")
    }

    pub fn ground(&self) -> QuantumState {
        QuantumState::basis(2, 0).expect("dimension 2")
    }

    pub fn excited(&self) -> QuantumState {
        QuantumState::basis(2, 1).expect("dimension 2")
    }

    /// κ(ΔE)² relative to Ω; below 1 the measurement is soft.
    pub fn measurement_ratio(&self) -> f64 {
        self.kappa * self.level_splitting * self.level_splitting / self.rabi
    }

    /// Time π/Ω of a full population flip without measurement.
    pub fn flip_time(&self) -> Result<f64> {
        if self.rabi <= 0.0 {
            return Err(Error::InvalidParameter("flip time needs a positive Rabi frequency".into()));
        }
        Ok(PI / self.rabi)
    }

    fn regime_warning(&self) -> Option<String> {
        let ratio = self.measurement_ratio();
        (ratio >= 1.0).then(|| format!("kappa*dE^2/Omega = {ratio:.3} is outside the soft-measurement regime"))
    }

    /// Largest SSE step allowed for this system with the given accuracy
    /// factor (κ(ΔE)²dt ≤ factor).
    fn sse_dt(&self, factor: f64, max_dt: f64) -> f64 {
        let stiffness = self.kappa * self.level_splitting * self.level_splitting;
        max_dt.min(factor.min(MAX_STEP_STIFFNESS) / stiffness)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZenoScanResult {
    pub kappa_values: Vec<f64>,
    /// Excited population at t = π/Ω from the Lindblad equation.
    pub transfer_probabilities: Vec<f64>,
    /// Ensemble estimate of the same population; empty without trajectories.
    pub sse_transfer: Vec<f64>,
    /// Largest trace distance between the ensemble mean and the Lindblad
    /// state over the output times; empty without trajectories.
    pub sse_max_trace_distance: Vec<f64>,
    pub monotone: bool,
}

impl ZenoScanResult {
    pub fn to_csv(&self) -> String {
        let with_sse = !self.sse_transfer.is_empty();
        let mut header = vec!["kappa".to_string(), "transfer".to_string()];
        if with_sse {
            header.push("sse_transfer".into());
            header.push("sse_max_trace_distance".into());
        }
        let rows = (0..self.kappa_values.len()).map(|i| {
            let mut row = vec![self.kappa_values[i], self.transfer_probabilities[i]];
            if with_sse {
                row.push(self.sse_transfer[i]);
                row.push(self.sse_max_trace_distance[i]);
            }
            row
        });
        csv_table(&header, rows)
    }
}

/// Output samples per Zeno trajectory ensemble.
const ZENO_SAMPLES: usize = 50;

/// Excited-state population after π/Ω for every κ, starting from the ground
/// state. With `n_traj > 0` each point is also estimated from an SSE
/// ensemble with seeds `seed, seed + 1, …`.
pub fn run_zeno_scan(system: &DrivenTwoLevel, kappa_list: &[f64], n_traj: usize, seed: u64) -> Result<ZenoScanResult> {
    if kappa_list.is_empty() {
        return Err(Error::InvalidParameter("kappa list is empty".into()));
    }
    if kappa_list.iter().any(|&k| !(k > 0.0 && k.is_finite())) || kappa_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("kappa values must be positive and ascending".into()));
    }
    let t_flip = system.flip_time()?;
    let mut result = ZenoScanResult {
        kappa_values: kappa_list.to_vec(),
        transfer_probabilities: Vec::with_capacity(kappa_list.len()),
        sse_transfer: Vec::new(),
        sse_max_trace_distance: Vec::new(),
        monotone: true,
    };
    for &kappa in kappa_list {
        let sys = system.with_kappa(kappa)?;
        let rho0 = crate::hilbert::DensityMatrix::from_state(&sys.ground());
        let dt = sys.sse_dt(0.02, 1e-3);
        // A whole number of output strides per run.
        let n_steps = ((t_flip / dt).ceil() as usize).div_ceil(ZENO_SAMPLES) * ZENO_SAMPLES;
        let grid = TimeGrid::new(0.0, t_flip / n_steps as f64, n_steps)?;
        let lind = integrate_lindblad(&sys.lindblad_model(), &rho0, &grid)?;
        result.transfer_probabilities.push(lind.last().population(1));
        if n_traj > 0 {
            let stride = n_steps / ZENO_SAMPLES;
            let ens = ensemble_average_strided(&sys.monitoring_model(), &sys.ground(), &grid, n_traj, seed, stride)?;
            let mut worst = 0.0_f64;
            for (rho, &k) in ens.mean_rho.iter().zip(&ens.sample_steps) {
                worst = worst.max(trace_distance(rho, &lind.states[k])?);
            }
            result.sse_transfer.push(ens.mean_rho.last().expect("non-empty").population(1));
            result.sse_max_trace_distance.push(worst);
        }
    }
    result.monotone = result.transfer_probabilities.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiMonitorConfig {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Number of equal record segments averaged in the periodogram.
    pub segments: usize,
    /// Frequency of the line to look for; defaults to Ω/2π.
    pub line_frequency: Option<f64>,
}

impl RabiMonitorConfig {
    /// T = 6400/Ω, dt = 10⁻³/Ω, 64 segments.
    pub fn for_system(system: &DrivenTwoLevel, seed: u64) -> Result<Self> {
        if system.rabi <= 0.0 {
            return Err(Error::InvalidParameter("default Rabi monitor settings need a positive Rabi frequency".into()));
        }
        Ok(Self { duration: 6400.0 / system.rabi, dt: 1e-3 / system.rabi, seed, segments: 64, line_frequency: None })
    }
}

#[derive(Debug, Clone)]
pub struct RabiMonitorResult {
    pub record: ReadoutRecord,
    /// ⟨H0⟩ at the start of every step.
    pub expectation: Vec<f64>,
    /// (frequency, power) for bins 1..L/2 of the averaged periodogram.
    pub spectrum: Vec<(f64, f64)>,
    pub line_frequency: f64,
    pub peak_frequency: f64,
    /// Largest power within ±2 bins of the line over the median bin power in
    /// [f/2, 3f/2].
    pub peak_ratio: f64,
    pub detected: bool,
    pub warning: Option<String>,
}

impl RabiMonitorResult {
    pub fn spectrum_csv(&self) -> String {
        csv_table(&["frequency".to_string(), "power".to_string()], self.spectrum.iter().map(|&(f, p)| [f, p]))
    }
}

/// Bartlett periodogram: the record is cut into `segments` equal pieces,
/// each is mean-subtracted and transformed, and the powers are averaged.
/// Returns (frequency, power) for bins 1..=L/2 with L the segment length.
pub fn averaged_periodogram(values: &[f64], dt: f64, segments: usize) -> Result<Vec<(f64, f64)>> {
    if segments == 0 || values.len() / segments.max(1) < 8 {
        return Err(Error::InvalidParameter("record too short for the requested number of segments".into()));
    }
    let len = values.len() / segments;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut power = vec![0.0; len / 2];
    let mut buffer = vec![Complex::new(0.0, 0.0); len];
    for seg in values.chunks_exact(len).take(segments) {
        let mean = seg.iter().sum::<f64>() / len as f64;
        for (b, v) in buffer.iter_mut().zip(seg) {
            *b = Complex::new(v - mean, 0.0);
        }
        fft.process(&mut buffer);
        for (k, p) in power.iter_mut().enumerate() {
            *p += buffer[k + 1].norm_sqr() * dt / len as f64;
        }
    }
    let df = 1.0 / (len as f64 * dt);
    Ok(power.into_iter().enumerate().map(|(k, p)| ((k + 1) as f64 * df, p / segments as f64)).collect())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One SSE trajectory from the ground state and the periodogram of its
/// readout. The line counts as detected when the strongest bin in
/// [f/2, 3f/2] lies within two bins of f and the power near f exceeds three
/// times the median bin of that band.
pub fn run_rabi_monitor(system: &DrivenTwoLevel, config: &RabiMonitorConfig) -> Result<RabiMonitorResult> {
    let line_frequency = match config.line_frequency {
        Some(f) if f > 0.0 => f,
        Some(_) => return Err(Error::InvalidParameter("line frequency must be positive".into())),
        None if system.rabi > 0.0 => system.rabi / (2.0 * PI),
        None => return Err(Error::InvalidParameter("undriven system needs an explicit line frequency".into())),
    };
    let grid = TimeGrid::covering(config.duration, config.dt)?;
    let (record, expectation) = simulate_record(&system.monitoring_model(), &system.ground(), &grid, config.seed)?;
    let spectrum = averaged_periodogram(record.values(), grid.dt(), config.segments)?;
    let df = spectrum[0].0;
    let line_bin = ((line_frequency / df).round() as usize).max(1) - 1;
    if line_bin + 1 >= spectrum.len() {
        return Err(Error::InvalidParameter("line frequency above the Nyquist limit".into()));
    }
    let band_lo = ((0.5 * line_frequency / df).floor() as usize).saturating_sub(1);
    let band_hi = (((1.5 * line_frequency / df).ceil() as usize).saturating_sub(1)).min(spectrum.len() - 1);
    let peak_bin = (band_lo..=band_hi).max_by(|&i, &j| spectrum[i].1.total_cmp(&spectrum[j].1)).expect("non-empty band");
    let near = line_bin.saturating_sub(2)..=(line_bin + 2).min(spectrum.len() - 1);
    let near_power = near.map(|i| spectrum[i].1).fold(0.0, f64::max);
    let mut powers: Vec<f64> = spectrum[band_lo..=band_hi].iter().map(|&(_, p)| p).collect();
    let peak_ratio = near_power / median(&mut powers);
    let detected = peak_bin.abs_diff(line_bin) <= 2 && peak_ratio >= 3.0;
    Ok(RabiMonitorResult {
        record,
        expectation,
        peak_frequency: spectrum[peak_bin].0,
        spectrum,
        line_frequency,
        peak_ratio,
        detected,
        warning: if system.rabi > 0.0 { system.regime_warning() } else { None },
    })
}

/// Smoothing window and hysteresis thresholds of the transition detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub window: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DetectorConfig {
    /// Window 1/(2Ω), thresholds ±ΔE/4.
    pub fn for_system(system: &DrivenTwoLevel) -> Result<Self> {
        if system.rabi <= 0.0 {
            return Err(Error::InvalidParameter("default detector window needs a positive Rabi frequency".into()));
        }
        Ok(Self { window: 0.5 / system.rabi, lower: -0.25 * system.level_splitting, upper: 0.25 * system.level_splitting })
    }

    fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) || !(self.lower < self.upper) {
            return Err(Error::InvalidParameter("detector needs a positive window and lower < upper".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub upward: bool,
}

#[derive(Debug, Clone)]
pub struct TransitionMonitorResult {
    pub record: ReadoutRecord,
    pub smoothed: Vec<f64>,
    /// ⟨H0⟩ at the start of every step.
    pub expectation: Vec<f64>,
    pub transitions: Vec<Transition>,
    pub warning: Option<String>,
}

impl TransitionMonitorResult {
    /// Columns t (step midpoint), raw readout, smoothed readout, ⟨H0⟩.
    pub fn record_csv(&self) -> String {
        let grid = self.record.grid();
        let header: Vec<String> = ["t", "a", "smoothed", "expectation"].iter().map(|s| s.to_string()).collect();
        csv_table(
            &header,
            (0..grid.n_steps()).map(|k| [grid.midpoint(k), self.record.values()[k], self.smoothed[k], self.expectation[k]]),
        )
    }

    pub fn transitions_csv(&self) -> String {
        csv_table(
            &["t".to_string(), "upward".to_string()],
            self.transitions.iter().map(|t| [t.time, if t.upward { 1.0 } else { 0.0 }]),
        )
    }

    pub fn upward_count(&self) -> usize {
        self.transitions.iter().filter(|t| t.upward).count()
    }
}

/// Centered moving average over `width` samples, truncated at the ends.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().expect("non-empty") + v);
    }
    let half = width / 2;
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + width - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Hysteresis crossings of `smoothed`: an upward transition is reported when
/// the signal reaches `upper` after last being at or below `lower`, and vice
/// versa.
pub fn detect_transitions(smoothed: &[f64], grid: &TimeGrid, detector: &DetectorConfig) -> Vec<Transition> {
    let mut level: Option<bool> = None;
    let mut found = Vec::new();
    for (k, &v) in smoothed.iter().enumerate() {
        let now = if v >= detector.upper {
            Some(true)
        } else if v <= detector.lower {
            Some(false)
        } else {
            None
        };
        if let Some(high) = now {
            if level == Some(!high) {
                found.push(Transition { time: grid.midpoint(k), upward: high });
            }
            level = Some(high);
        }
    }
    found
}

/// One SSE trajectory from `initial` with its raw and smoothed readout and
/// the detected level transitions.
pub fn run_transition_monitor(
    system: &DrivenTwoLevel,
    initial: &QuantumState,
    duration: f64,
    dt: f64,
    seed: u64,
    detector: &DetectorConfig,
) -> Result<TransitionMonitorResult> {
    detector.validate()?;
    let grid = TimeGrid::covering(duration, dt)?;
    let (record, expectation) = simulate_record(&system.monitoring_model(), initial, &grid, seed)?;
    let width = ((detector.window / grid.dt()).round() as usize).max(1);
    let smoothed = moving_average(record.values(), width);
    let transitions = detect_transitions(&smoothed, &grid, detector);
    Ok(TransitionMonitorResult {
        record,
        smoothed,
        expectation,
        transitions,
        warning: if system.rabi > 0.0 { system.regime_warning() } else { None },
    })
}
