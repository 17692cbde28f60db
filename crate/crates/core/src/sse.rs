//! Diffusive unraveling of the Lindblad equation:
//!
//! dψ = [−iH − (κ/2)(A − ⟨A⟩)²]ψ dt + √κ (A − ⟨A⟩)ψ dW,
//!
//! integrated by Euler–Maruyama with renormalization after every step. The
//! readout of step k is a_k = ⟨A⟩_{t_k} + dW_k/(2√κ dt).
//!
//! Gaussian increments come from `ChaCha8Rng::seed_from_u64(seed)` through
//! the `rand_distr::StandardNormal` ziggurat, scaled by √dt.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chm::MonitoringModel;
use crate::error::{Error, Result};
use crate::export::csv_table;
use crate::hilbert::{c64, check_dims, trace_distance, CMatrix, CVector, DensityMatrix, QuantumState};
use crate::readout::{ReadoutRecord, TimeGrid};

/// Upper bound on κ·(spread of A)²·dt.
pub const MAX_STEP_STIFFNESS: f64 = 0.1;

/// Trajectories per reduction chunk. Fixed so that ensemble sums do not
/// depend on the number of worker threads.
const CHUNK: usize = 64;

fn check_step(model: &MonitoringModel, dt: f64) -> Result<()> {
    let spread = model.observable().spectral_spread();
    let stiffness = model.kappa() * spread * spread * dt;
    if !(dt > 0.0 && dt.is_finite()) || stiffness > MAX_STEP_STIFFNESS {
        return Err(Error::StepTooLarge(format!(
            "kappa * spread(A)^2 * dt = {stiffness:.4} exceeds {MAX_STEP_STIFFNESS}"
        )));
    }
    Ok(())
}

/// Euler–Maruyama stepper with preallocated work vectors.
struct Stepper<'a> {
    minus_i_h: CMatrix,
    a: &'a CMatrix,
    kappa: f64,
    av: CVector,
    ad: CVector,
    hv: CVector,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a MonitoringModel) -> Self {
        let n = model.dim();
        Self {
            minus_i_h: model.hamiltonian().matrix().map(|z| z * c64(0.0, -1.0)),
            a: model.observable().matrix(),
            kappa: model.kappa(),
            av: CVector::zeros(n),
            ad: CVector::zeros(n),
            hv: CVector::zeros(n),
        }
    }

    /// Advances `psi` in place and returns ⟨A⟩ before the step together with
    /// the squared norm of the raw update.
    fn step(&mut self, psi: &mut CVector, dw: f64, dt: f64) -> Result<(f64, f64)> {
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        self.av.gemv(one, self.a, psi, zero);
        let mean = psi.dotc(&self.av).re;
        // av ← (A − ⟨A⟩)ψ
        self.av.axpy(c64(-mean, 0.0), psi, one);
        self.ad.gemv(one, self.a, &self.av, zero);
        self.ad.axpy(c64(-mean, 0.0), &self.av, one);
        self.hv.gemv(one, &self.minus_i_h, psi, zero);
        psi.axpy(c64(dt, 0.0), &self.hv, one);
        psi.axpy(c64(-0.5 * self.kappa * dt, 0.0), &self.ad, one);
        psi.axpy(c64(self.kappa.sqrt() * dw, 0.0), &self.av, one);
        let norm_sqr = psi.norm_squared();
        if !norm_sqr.is_finite() || norm_sqr == 0.0 {
            return Err(Error::NonFinite("stochastic step"));
        }
        psi.unscale_mut(norm_sqr.sqrt());
        Ok((mean, norm_sqr))
    }
}

/// One Euler–Maruyama step followed by renormalization.
pub fn sse_step(model: &MonitoringModel, psi: &QuantumState, dw: f64, dt: f64) -> Result<QuantumState> {
    check_dims(model.dim(), psi.dim())?;
    check_step(model, dt)?;
    if !dw.is_finite() {
        return Err(Error::NonFinite("Wiener increment"));
    }
    let mut v = psi.amplitudes().clone();
    Stepper::new(model).step(&mut v, dw, dt)?;
    Ok(QuantumState::new(v)?.normalized())
}

fn readout(mean: f64, dw: f64, kappa: f64, dt: f64) -> f64 {
    mean + dw / (2.0 * kappa.sqrt() * dt)
}

/// Runs one trajectory, calling `visit(k, ψ_k)` for every boundary k whose
/// index is a multiple of `stride` (and always for k = 0). Returns the
/// record and ⟨A⟩ at the start of each step.
fn run<F: FnMut(usize, &CVector)>(
    model: &MonitoringModel,
    psi0: &QuantumState,
    grid: &TimeGrid,
    seed: u64,
    stride: usize,
    mut visit: F,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let kappa = model.kappa();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = Stepper::new(model);
    let mut psi = psi0.amplitudes().clone();
    let mut record = Vec::with_capacity(grid.n_steps());
    let mut means = Vec::with_capacity(grid.n_steps());
    visit(0, &psi);
    for k in 0..grid.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        let dw = z * sqrt_dt;
        let (mean, _) = stepper.step(&mut psi, dw, dt)?;
        record.push(readout(mean, dw, kappa, dt));
        means.push(mean);
        if (k + 1) % stride == 0 {
            visit(k + 1, &psi);
        }
    }
    Ok((record, means))
}

#[derive(Debug, Clone)]
pub struct SseTrajectory {
    /// `n_steps + 1` normalized states on the record grid.
    pub states: Vec<QuantumState>,
    pub record: ReadoutRecord,
    pub seed: u64,
}

pub fn simulate_trajectory(model: &MonitoringModel, psi0: &QuantumState, grid: &TimeGrid, seed: u64) -> Result<SseTrajectory> {
    check_dims(model.dim(), psi0.dim())?;
    check_step(model, grid.dt())?;
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let mut failed = None;
    let (record, _) = run(model, psi0, grid, seed, 1, |_, v| match QuantumState::new(v.clone()).map(|s| s.normalized()) {
        Ok(s) => states.push(s),
        Err(e) => failed = Some(e),
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    Ok(SseTrajectory { states, record: ReadoutRecord::new(*grid, record)?, seed })
}

/// Record of one trajectory and ⟨A⟩ at the start of every step, without
/// storing the states.
pub fn simulate_record(model: &MonitoringModel, psi0: &QuantumState, grid: &TimeGrid, seed: u64) -> Result<(ReadoutRecord, Vec<f64>)> {
    check_dims(model.dim(), psi0.dim())?;
    check_step(model, grid.dt())?;
    let (record, means) = run(model, psi0, grid, seed, usize::MAX, |_, _| {})?;
    Ok((ReadoutRecord::new(*grid, record)?, means))
}

#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub n_traj: usize,
    pub seed_base: u64,
    /// Grid boundary indices at which `mean_rho` is sampled.
    pub sample_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub mean_rho: Vec<DensityMatrix>,
    /// Mean readout of step k for every sampled k < n_steps.
    pub mean_record: Vec<f64>,
}

impl EnsembleSummary {
    /// CSV with columns t, ⟨A⟩, ⟨H⟩, purity and, if `reference` is given,
    /// the trace distance to the matching reference state.
    pub fn to_csv(&self, model: &MonitoringModel, reference: Option<&[DensityMatrix]>) -> Result<String> {
        if let Some(r) = reference {
            check_dims(self.mean_rho.len(), r.len())?;
        }
        let mut header: Vec<String> = ["t", "mean_a", "mean_h", "purity"].iter().map(|s| s.to_string()).collect();
        if reference.is_some() {
            header.push("trace_distance".into());
        }
        let mut rows = Vec::with_capacity(self.mean_rho.len());
        for (i, rho) in self.mean_rho.iter().enumerate() {
            let mut row = vec![self.times[i], rho.expectation(model.observable())?, rho.expectation(model.hamiltonian())?, rho.purity()];
            if let Some(r) = reference {
                row.push(trace_distance(rho, &r[i])?);
            }
            rows.push(row);
        }
        Ok(csv_table(&header, rows))
    }
}

pub fn ensemble_average(model: &MonitoringModel, psi0: &QuantumState, grid: &TimeGrid, n_traj: usize, seed_base: u64) -> Result<EnsembleSummary> {
    ensemble_average_strided(model, psi0, grid, n_traj, seed_base, 1)
}

/// Ensemble mean sampled on every `stride`-th grid boundary. Trajectory i
/// uses seed `seed_base + i`; the reduction order is fixed, so the result is
/// bit-identical for any thread count.
pub fn ensemble_average_strided(
    model: &MonitoringModel,
    psi0: &QuantumState,
    grid: &TimeGrid,
    n_traj: usize,
    seed_base: u64,
    stride: usize,
) -> Result<EnsembleSummary> {
    check_dims(model.dim(), psi0.dim())?;
    check_step(model, grid.dt())?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be positive".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let sample_steps: Vec<usize> = (0..=grid.n_steps()).step_by(stride).collect();
    let n_samples = sample_steps.len();
    let n_record = sample_steps.iter().filter(|&&k| k < grid.n_steps()).count();
    let dim = model.dim();
    let zero_sums = || (vec![CMatrix::zeros(dim, dim); n_samples], vec![0.0; n_record]);

    let chunk_sums: Vec<Result<(Vec<CMatrix>, Vec<f64>)>> = (0..n_traj.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let (mut rho_sum, mut rec_sum) = zero_sums();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                let seed = seed_base.wrapping_add(i as u64);
                let (record, _) = run(model, psi0, grid, seed, stride, |k, v| {
                    rho_sum[k / stride] += v * v.adjoint();
                })?;
                for (j, s) in rec_sum.iter_mut().enumerate() {
                    *s += record[j * stride];
                }
            }
            Ok((rho_sum, rec_sum))
        })
        .collect();

    let (mut rho_sum, mut rec_sum) = zero_sums();
    for chunk in chunk_sums {
        let (r, a) = chunk?;
        for (acc, m) in rho_sum.iter_mut().zip(r) {
            *acc += m;
        }
        for (acc, v) in rec_sum.iter_mut().zip(a) {
            *acc += v;
        }
    }
    let inv = 1.0 / n_traj as f64;
    let mean_rho = rho_sum
        .iter()
        .map(|m| DensityMatrix::renormalized(&m.scale(inv)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleSummary {
        n_traj,
        seed_base,
        times: sample_steps.iter().map(|&k| grid.time(k)).collect(),
        sample_steps,
        mean_rho,
        mean_record: rec_sum.into_iter().map(|s| s * inv).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, unitary, HermitianOperator};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn plus() -> QuantumState {
        QuantumState::from_slice(&[c64(FRAC_1_SQRT_2, 0.), c64(FRAC_1_SQRT_2, 0.)]).unwrap()
    }

    fn model(h: HermitianOperator, a: HermitianOperator, kappa: f64) -> MonitoringModel {
        MonitoringModel::new(h, a, kappa).unwrap()
    }

    #[test]
    fn eigenstate_step_is_unitary() {
        let h = HermitianOperator::pauli_x();
        let m = model(h.clone(), HermitianOperator::pauli_z(), 2.0);
        let psi = QuantumState::basis(2, 1).unwrap();
        let dt = 1e-3;
        let exact = unitary(&h, dt).unwrap() * psi.amplitudes();
        for dw in [-0.1, 0.0, 0.05] {
            let next = sse_step(&m, &psi, dw, dt).unwrap();
            assert!((next.amplitudes() - &exact).norm() < 2.0 * dt * dt);
        }
    }

    #[test]
    fn identity_observable_record_is_noise() {
        let kappa = 0.8;
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::identity(2).unwrap(), kappa);
        let grid = TimeGrid::new(0.0, 1e-3, 20_000).unwrap();
        let (record, means) = simulate_record(&m, &QuantumState::basis(2, 0).unwrap(), &grid, 11).unwrap();
        assert!(means.iter().all(|&e| (e - 1.0).abs() < 1e-12));
        let n = record.values().len() as f64;
        let mean = record.mean();
        let var = record.values().iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_var = 1.0 / (4.0 * kappa * 1e-3);
        assert!((mean - 1.0).abs() < 4.0 * (expected_var / n).sqrt());
        assert!((var / expected_var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn eigenstate_record_average() {
        let kappa = 1.5;
        let m = model(HermitianOperator::diagonal(&[0.2, -0.3]).unwrap(), HermitianOperator::pauli_z(), kappa);
        let grid = TimeGrid::new(0.0, 1e-3, 2000).unwrap();
        let t = grid.duration();
        let averages: Vec<f64> = (0..400)
            .map(|s| simulate_record(&m, &QuantumState::basis(2, 1).unwrap(), &grid, s).unwrap().0.mean())
            .collect();
        let n = averages.len() as f64;
        let mean = averages.iter().sum::<f64>() / n;
        let var = averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected_var = 1.0 / (4.0 * kappa * t);
        assert!((mean + 1.0).abs() < 4.0 * (expected_var / n).sqrt(), "{mean}");
        assert!((var / expected_var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "{var}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        let grid = TimeGrid::new(0.0, 1e-3, 500).unwrap();
        let a = simulate_trajectory(&m, &plus(), &grid, 42).unwrap();
        let b = simulate_trajectory(&m, &plus(), &grid, 42).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.states, b.states);
        let c = simulate_trajectory(&m, &plus(), &grid, 43).unwrap();
        assert_ne!(a.record, c.record);
        let (r, _) = simulate_record(&m, &plus(), &grid, 42).unwrap();
        assert_eq!(r, a.record);
    }

    #[test]
    fn states_normalized_and_record_matches_expectation() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        let grid = TimeGrid::new(0.0, 1e-3, 300).unwrap();
        let traj = simulate_trajectory(&m, &plus(), &grid, 7).unwrap();
        assert_eq!(traj.states.len(), 301);
        for s in &traj.states {
            assert!((s.amplitudes().norm() - 1.0).abs() < 1e-12);
            assert_eq!(s.log_norm(), 0.0);
        }
        // Recover dW from the record and replay the steps.
        let mut psi = plus();
        for k in 0..grid.n_steps() {
            let mean = expectation(&psi, m.observable()).unwrap();
            let dw = (traj.record.values()[k] - mean) * 2.0 * m.kappa().sqrt() * grid.dt();
            psi = sse_step(&m, &psi, dw, grid.dt()).unwrap();
            assert!((psi.amplitudes() - traj.states[k + 1].amplitudes()).norm() < 1e-10);
        }
    }

    #[test]
    fn single_trajectory_ensemble_is_projector_sequence() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        let grid = TimeGrid::new(0.0, 1e-3, 200).unwrap();
        let ens = ensemble_average(&m, &plus(), &grid, 1, 5).unwrap();
        let traj = simulate_trajectory(&m, &plus(), &grid, 5).unwrap();
        for (rho, s) in ens.mean_rho.iter().zip(&traj.states) {
            assert!((rho.matrix() - s.projector()).norm() < 1e-14);
        }
        assert_eq!(ens.mean_record.len(), 200);
        assert_eq!(ens.mean_record[..], traj.record.values()[..]);
    }

    #[test]
    fn identity_observable_ensemble_is_unitary() {
        let h = HermitianOperator::pauli_x();
        let m = model(h.clone(), HermitianOperator::identity(2).unwrap(), 3.0);
        let grid = TimeGrid::new(0.0, 1e-3, 1000).unwrap();
        let psi0 = QuantumState::basis(2, 0).unwrap();
        let ens = ensemble_average_strided(&m, &psi0, &grid, 8, 0, 100).unwrap();
        assert_eq!(ens.sample_steps, (0..=1000).step_by(100).collect::<Vec<_>>());
        for (rho, &t) in ens.mean_rho.iter().zip(&ens.times) {
            let v = unitary(&h, t).unwrap() * psi0.amplitudes();
            assert!((rho.matrix() - &v * v.adjoint()).norm() < 1e-6);
        }
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        let grid = TimeGrid::new(0.0, 1e-3, 200).unwrap();
        let run_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_average_strided(&m, &plus(), &grid, 300, 9, 10).unwrap())
        };
        let a = run_with(1);
        let b = run_with(4);
        for (x, y) in a.mean_rho.iter().zip(&b.mean_rho) {
            assert_eq!(x.matrix(), y.matrix());
        }
        assert_eq!(a.mean_record, b.mean_record);
    }

    #[test]
    fn mean_norm_correction_is_small() {
        // ‖ψ'‖² − 1 = κVar(A)(dW² − dt) + O(dt^{3/2}); the mean vanishes to
        // higher order.
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        for dt in [4e-3_f64, 1e-3] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut stepper = Stepper::new(&m);
            let mut psi = plus().amplitudes().clone();
            let n = 200_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let (_, norm_sqr) = stepper.step(&mut psi, z * dt.sqrt(), dt).unwrap();
                sum += norm_sqr - 1.0;
            }
            let mean = sum / n as f64;
            assert!(mean.abs() < dt.powf(1.5), "dt {dt}: {mean}");
        }
    }

    #[test]
    fn step_size_guard() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 100.0);
        assert!(matches!(sse_step(&m, &plus(), 0.0, 1e-3), Err(Error::StepTooLarge(_))));
        assert!(sse_step(&m, &plus(), 0.0, 2e-4).is_ok());
        assert!(ensemble_average(&m, &plus(), &TimeGrid::new(0.0, 1e-3, 10).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn ensemble_csv_columns() {
        let m = model(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5);
        let grid = TimeGrid::new(0.0, 1e-3, 20).unwrap();
        let ens = ensemble_average_strided(&m, &plus(), &grid, 4, 0, 10).unwrap();
        let csv = ens.to_csv(&m, Some(&ens.mean_rho)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,mean_a,mean_h,purity,trace_distance");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",0"));
    }
}
