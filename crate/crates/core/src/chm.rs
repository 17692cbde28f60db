//! Selective evolution under the complex Hamiltonian H − iκ(A − a(t))².
//!
//! A readout record [a] selects a partial propagator U^[a]; the squared norm
//! of U^[a]ψ is the density of that record relative to the Gaussian
//! reference measure of [`crate::readout`]. Integrating ρ ↦ U^[a] ρ U^[a]†
//! over all records recovers the Lindblad evolution.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::export::csv_table;
use crate::hilbert::{c64, check_dims, unitary, CMatrix, CVector, DensityMatrix, HermitianOperator, NonHermitianOperator, QuantumState, Spectrum};
use crate::lindblad::{LindbladModel, POSITIVITY_ABORT};
use crate::quadrature::GaussHermite;
use crate::readout::{reference_log_weight, ReadoutDensity, ReadoutRecord, TimeGrid};

/// Tolerance on the largest singular value of a partial propagator.
pub const CONTRACTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MonitoringModel {
    h: HermitianOperator,
    a: HermitianOperator,
    kappa: f64,
    a_spectrum: Spectrum,
}

impl MonitoringModel {
    pub fn new(h: HermitianOperator, a: HermitianOperator, kappa: f64) -> Result<Self> {
        check_dims(h.dim(), a.dim())?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        let a_spectrum = a.spectrum();
        Ok(Self { h, a, kappa, a_spectrum })
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.a
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn observable_spectrum(&self) -> &Spectrum {
        &self.a_spectrum
    }

    /// The nonselective model with the same H, A and κ.
    pub fn lindblad(&self) -> LindbladModel {
        LindbladModel::new(self.h.clone(), self.a.clone(), self.kappa).expect("fields already validated")
    }

    /// exp(−κ(A − a)²τ), the fuzzy-measurement factor for readout `a`
    /// held for time `tau`.
    pub fn measurement_factor(&self, a: f64, tau: f64) -> CMatrix {
        let k = self.kappa;
        self.a_spectrum.apply_fn(|l| c64((-k * (l - a) * (l - a) * tau).exp(), 0.0))
    }

    /// −iH − κ(A − a)².
    fn generator(&self, a: f64) -> CMatrix {
        let damping = self.a.shifted_square(a).scale(self.kappa);
        self.h.matrix().map(|z| z * c64(0.0, -1.0)) - damping
    }

    fn spectral_midpoint(&self) -> f64 {
        let v = &self.a_spectrum.values;
        0.5 * (v[0] + v[v.len() - 1])
    }
}

impl From<&LindbladModel> for MonitoringModel {
    fn from(m: &LindbladModel) -> Self {
        MonitoringModel::new(m.hamiltonian().clone(), m.observable().clone(), m.kappa()).expect("fields already validated")
    }
}

/// H − iκ(A − a)².
pub fn effective_hamiltonian(model: &MonitoringModel, a: f64) -> Result<NonHermitianOperator> {
    if !a.is_finite() {
        return Err(Error::NonFinite("readout value"));
    }
    let damping = model.a.shifted_square(a).map(|z| z * c64(0.0, -model.kappa));
    NonHermitianOperator::new(model.h.matrix() + damping)
}

/// RK4 settings for the complex-Hamiltonian equation. Each record step is
/// split into substeps short enough that h·(κ(‖A‖ + |a|)² + ‖H‖) stays
/// below `max_substep_stiffness`.
#[derive(Debug, Clone, Copy)]
pub struct ChmIntegrator {
    pub max_substep_stiffness: f64,
    pub max_substeps: usize,
}

impl Default for ChmIntegrator {
    fn default() -> Self {
        Self { max_substep_stiffness: 0.05, max_substeps: 1 << 16 }
    }
}

impl ChmIntegrator {
    fn substeps(&self, model: &MonitoringModel, a_norm: f64, h_norm: f64, a: f64, dt: f64, step: usize) -> Result<usize> {
        let stiffness = (model.kappa * (a_norm + a.abs()).powi(2) + h_norm) * dt;
        let required = (stiffness / self.max_substep_stiffness).ceil().max(1.0) as usize;
        if required > self.max_substeps {
            return Err(Error::ResolutionMismatch { step, value: a, required, limit: self.max_substeps });
        }
        Ok(required)
    }
}

/// One RK4 step for ψ' = Gψ: (1 + hG + (hG)²/2 + (hG)³/6 + (hG)⁴/24)ψ.
fn rk4_linear(g: &CMatrix, psi: &CVector, h: f64) -> CVector {
    let mut term = psi.clone();
    let mut sum = psi.clone();
    for n in 1..=4 {
        term = (g * term).scale(h / n as f64);
        sum += &term;
    }
    sum
}

/// Result of a selective run: the state after each record step.
#[derive(Debug, Clone)]
pub struct ChmRun {
    pub record: ReadoutRecord,
    /// `n_steps + 1` states; the first is ψ₀.
    pub states: Vec<QuantumState>,
    pub density: ReadoutDensity,
}

impl ChmRun {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("run always holds the initial state")
    }

    /// CSV with columns t, a, log_norm and Re/Im of each amplitude; one row
    /// per completed step.
    pub fn to_csv(&self) -> String {
        let dim = self.states[0].dim();
        let mut header = vec!["t".to_string(), "a".to_string(), "log_norm".to_string()];
        for i in 0..dim {
            header.push(format!("re_{i}"));
            header.push(format!("im_{i}"));
        }
        let grid = self.record.grid();
        let rows = (1..self.states.len()).map(|k| {
            let s = &self.states[k];
            let mut row = vec![grid.time(k), self.record.values()[k - 1], s.log_norm()];
            for z in s.amplitudes().iter() {
                row.push(z.re);
                row.push(z.im);
            }
            row
        });
        csv_table(&header, rows)
    }
}

/// Integrates ∂ψ/∂t = [−iH − κ(A − a(t))²]ψ along `record` and returns the
/// whole path.
pub fn propagate_chm_path(model: &MonitoringModel, psi0: &QuantumState, record: &ReadoutRecord, integrator: &ChmIntegrator) -> Result<ChmRun> {
    check_dims(model.dim(), psi0.dim())?;
    let dt = record.grid().dt();
    let a_norm = model.a.spectral_norm();
    let h_norm = model.h.spectral_norm();
    let mut states = Vec::with_capacity(record.values().len() + 1);
    states.push(psi0.clone());
    let mut psi = psi0.amplitudes().clone();
    let mut log_norm = psi0.log_norm();
    for (step, &a) in record.values().iter().enumerate() {
        let substeps = integrator.substeps(model, a_norm, h_norm, a, dt, step)?;
        let h = dt / substeps as f64;
        let g = model.generator(a);
        let mut next = psi.clone();
        for _ in 0..substeps {
            next = rk4_linear(&g, &next, h);
        }
        let ratio = next.norm();
        if !ratio.is_finite() || ratio == 0.0 {
            return Err(Error::NonFinite("complex-Hamiltonian step"));
        }
        if ratio > 1.0 + 1e-6 {
            return Err(Error::NormGrowth { step, growth: ratio - 1.0 });
        }
        log_norm += ratio.ln();
        psi = next.unscale(ratio);
        states.push(QuantumState::with_log_norm(psi.clone(), log_norm)?);
    }
    let last = states.last().expect("non-empty");
    let log_density = 2.0 * last.log_norm() + reference_log_weight(record, model.kappa)?;
    Ok(ChmRun { record: record.clone(), states, density: ReadoutDensity { log_density } })
}

/// Final state (with accumulated `log_norm`) and the record density.
pub fn propagate_chm(model: &MonitoringModel, psi0: &QuantumState, record: &ReadoutRecord) -> Result<(QuantumState, ReadoutDensity)> {
    let run = propagate_chm_path(model, psi0, record, &ChmIntegrator::default())?;
    let density = run.density;
    let last = run.states.into_iter().last().expect("non-empty");
    Ok((last, density))
}

/// Partial evolution operator U^[a] for one record; always a contraction.
#[derive(Debug, Clone)]
pub struct PartialPropagator {
    matrix: NonHermitianOperator,
    record: ReadoutRecord,
}

impl PartialPropagator {
    pub fn new(matrix: NonHermitianOperator, record: ReadoutRecord) -> Result<Self> {
        let largest = largest_singular_value(matrix.matrix());
        if largest > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContraction(largest));
        }
        Ok(Self { matrix, record })
    }

    pub fn matrix(&self) -> &NonHermitianOperator {
        &self.matrix
    }

    pub fn record(&self) -> &ReadoutRecord {
        &self.record
    }

    pub fn largest_singular_value(&self) -> f64 {
        largest_singular_value(self.matrix.matrix())
    }

    /// U^[a]ψ with the norm moved into `log_norm`.
    pub fn apply(&self, psi: &QuantumState) -> Result<QuantumState> {
        check_dims(self.matrix.dim(), psi.dim())?;
        QuantumState::with_log_norm(self.matrix.matrix() * psi.amplitudes(), psi.log_norm())
    }
}

pub(crate) fn largest_singular_value(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().fold(0.0, |acc: f64, &s| acc.max(s))
}

/// Time-sliced product Π_k exp(−iH dt)·exp(−κ(A − a_k)² dt), later steps on
/// the left.
pub fn sliced_propagator(model: &MonitoringModel, record: &ReadoutRecord) -> Result<PartialPropagator> {
    let dt = record.grid().dt();
    let u = unitary(&model.h, dt)?;
    let n = model.dim();
    let mut total = CMatrix::identity(n, n);
    for &a in record.values() {
        total = &u * model.measurement_factor(a, dt) * total;
    }
    PartialPropagator::new(NonHermitianOperator::new(total)?, record.clone())
}

/// Propagator of the complex-Hamiltonian ODE along `record`, by RK4 with
/// `substeps` equal substeps per record step. Reference for the sliced
/// product.
pub fn ode_propagator(model: &MonitoringModel, record: &ReadoutRecord, substeps: usize) -> Result<NonHermitianOperator> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be positive".into()));
    }
    let h = record.grid().dt() / substeps as f64;
    let n = model.dim();
    let mut u = CMatrix::identity(n, n);
    for &a in record.values() {
        let g = model.generator(a);
        let hg = g.scale(h);
        let hg2 = &hg * &hg;
        let hg3 = &hg2 * &hg;
        let hg4 = &hg3 * &hg;
        let step = CMatrix::identity(n, n) + &hg + hg2.scale(0.5) + hg3.scale(1.0 / 6.0) + hg4.scale(1.0 / 24.0);
        for _ in 0..substeps {
            u = &step * u;
        }
    }
    NonHermitianOperator::new(u)
}

/// Gauss–Hermite nodes mapped onto readout values for one step of length
/// `dt`, paired with weights of the measure √(2κdt/π) da.
fn readout_nodes(model: &MonitoringModel, dt: f64, order: usize) -> Result<Vec<(f64, f64)>> {
    let gh = GaussHermite::new(order)?;
    let center = model.spectral_midpoint();
    let scale = (2.0 * model.kappa * dt).sqrt();
    // da = dx/scale and √(2κdt/π)/scale = 1/√π.
    let inv_sqrt_pi = 1.0 / PI.sqrt();
    Ok(gh.unweighted().map(|(x, w)| (center + x / scale, w * inv_sqrt_pi)).collect())
}

fn completeness_defect(model: &MonitoringModel, dt: f64, order: usize) -> Result<f64> {
    let n = model.dim();
    let mut total = CMatrix::zeros(n, n);
    for (a, w) in readout_nodes(model, dt, order)? {
        let r = model.measurement_factor(a, dt);
        total += (r.adjoint() * &r).scale(w);
    }
    Ok((total - CMatrix::identity(n, n)).iter().fold(0.0, |m, z| m.max(z.norm())))
}

/// Max-norm deviation of ∫ da √(2κdt/π) R_a†R_a from the identity for a
/// single step, R_a = exp(−κ(A − a)²dt).
pub fn generalized_unitarity_defect(model: &MonitoringModel, dt: f64, quad_order: usize) -> Result<f64> {
    if quad_order < 10 {
        return Err(Error::InvalidParameter("quadrature order must be at least 10".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let defect = completeness_defect(model, dt, quad_order)?;
    let previous_order = quad_order / 2;
    let previous = completeness_defect(model, dt, previous_order)?;
    if defect > 1e-8 && defect >= previous {
        return Err(Error::QuadratureDivergence { order: quad_order, defect, previous_order, previous });
    }
    Ok(defect)
}

/// Readout-averaged selective evolution. Each step applies
/// V·[∫ da √(2κdt/π) R_a (VρV†) R_a]·V† with V = exp(−iH dt/2), i.e. the
/// measurement factor sits at the middle of its slice.
pub fn marginalize_readouts(model: &MonitoringModel, rho0: &DensityMatrix, grid: &TimeGrid, quad_order: usize) -> Result<Vec<DensityMatrix>> {
    check_dims(model.dim(), rho0.dim())?;
    let dt = grid.dt();
    generalized_unitarity_defect(model, dt, quad_order)?;
    let half = unitary(&model.h, 0.5 * dt)?;
    let half_dag = half.adjoint();
    let kraus: Vec<(CMatrix, f64)> = readout_nodes(model, dt, quad_order)?
        .into_iter()
        .map(|(a, w)| (model.measurement_factor(a, dt), w))
        .collect();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(rho0.clone());
    let mut rho = rho0.matrix().clone();
    let n = model.dim();
    for step in 0..grid.n_steps() {
        let rotated = &half * &rho * &half_dag;
        let mut measured = CMatrix::zeros(n, n);
        for (r, w) in &kraus {
            measured += (r * &rotated * r).scale(*w);
        }
        let next = &half * measured * &half_dag;
        let state = DensityMatrix::renormalized(&next)?;
        let min_eigenvalue = state.min_eigenvalue();
        if min_eigenvalue < POSITIVITY_ABORT {
            return Err(Error::PositivityViolation { step, min_eigenvalue });
        }
        rho = state.matrix().clone();
        states.push(state);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expm, trace_distance};
    use crate::lindblad::integrate_lindblad;
    use crate::readout::constant_record;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    fn sz_model(h: HermitianOperator, kappa: f64) -> MonitoringModel {
        MonitoringModel::new(h, HermitianOperator::pauli_z(), kappa).unwrap()
    }

    #[test]
    fn effective_hamiltonian_examples() {
        let m = sz_model(HermitianOperator::zero(2).unwrap(), 1.0);
        let e = effective_hamiltonian(&m, 1.0).unwrap();
        assert!(max_abs(&(e.matrix() - CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., 0.), c64(0., 0.), c64(0., -4.)]))) < 1e-15);

        let m = sz_model(HermitianOperator::pauli_x(), 0.5);
        let e = effective_hamiltonian(&m, 0.0).unwrap();
        let expected = HermitianOperator::pauli_x().matrix() - CMatrix::identity(2, 2).map(|z| z * c64(0.0, 0.5));
        assert!(max_abs(&(e.matrix() - expected)) < 1e-15);

        let h = HermitianOperator::new(CMatrix::from_row_slice(2, 2, &[c64(0.2, 0.), c64(0.1, 0.3), c64(0.1, -0.3), c64(-0.4, 0.)])).unwrap();
        let m = MonitoringModel::new(h.clone(), HermitianOperator::identity(2).unwrap().scaled(1.7), 1.0).unwrap();
        assert_eq!(effective_hamiltonian(&m, 1.7).unwrap().matrix(), h.matrix());
    }

    #[test]
    fn selective_damping_closed_form() {
        let m = sz_model(HermitianOperator::zero(2).unwrap(), 0.5);
        let psi0 = QuantumState::from_slice(&[c64(FRAC_1_SQRT_2, 0.), c64(FRAC_1_SQRT_2, 0.)]).unwrap();
        let record = constant_record(TimeGrid::new(0.0, 0.01, 100).unwrap(), 1.0).unwrap();
        let (psi, density) = propagate_chm(&m, &psi0, &record).unwrap();
        let squared_norm = (2.0 * psi.log_norm()).exp();
        let expected = (1.0 + (-4.0f64).exp()) / 2.0;
        assert!((squared_norm - expected).abs() < 1e-10, "{squared_norm} vs {expected}");
        let ratio = psi.amplitudes()[1].norm() / psi.amplitudes()[0].norm();
        assert!((ratio - (-2.0f64).exp()).abs() < 1e-8, "{ratio}");
        let expected_density = expected.ln() + reference_log_weight(&record, 0.5).unwrap();
        assert!((density.log_density - expected_density).abs() < 1e-9);
    }

    #[test]
    fn single_step_density_normalized() {
        let m = sz_model(HermitianOperator::pauli_x(), 0.5);
        let psi0 = QuantumState::from_slice(&[c64(0.6, 0.), c64(0.0, 0.8)]).unwrap();
        let dt: f64 = 0.01;
        let scale = (2.0 * 0.5 * dt as f64).sqrt();
        let gh = GaussHermite::new(60).unwrap();
        let total: f64 = gh
            .unweighted()
            .map(|(x, w)| {
                let record = constant_record(TimeGrid::new(0.0, dt, 1).unwrap(), x / scale).unwrap();
                let (_, density) = propagate_chm(&m, &psi0, &record).unwrap();
                w / scale * density.log_density.exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn matching_eigenstate_is_undamped() {
        let h = HermitianOperator::diagonal(&[0.3, -0.8]).unwrap();
        let m = sz_model(h, 2.0);
        let psi0 = QuantumState::basis(2, 1).unwrap();
        let record = constant_record(TimeGrid::new(0.0, 0.01, 50).unwrap(), -1.0).unwrap();
        let (psi, _) = propagate_chm(&m, &psi0, &record).unwrap();
        assert!(psi.log_norm().abs() < 1e-12);
        assert!((psi.overlap_probability(&psi0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_observable_is_unitary() {
        let h = HermitianOperator::pauli_x();
        let m = MonitoringModel::new(h.clone(), HermitianOperator::identity(2).unwrap(), 3.0).unwrap();
        let psi0 = QuantumState::basis(2, 0).unwrap();
        let record = constant_record(TimeGrid::new(0.0, 0.01, 100).unwrap(), 1.0).unwrap();
        let (psi, _) = propagate_chm(&m, &psi0, &record).unwrap();
        assert!(psi.log_norm().abs() < 1e-12);
        let expected = unitary(&h, 1.0).unwrap() * psi0.amplitudes();
        assert!((psi.amplitudes().dotc(&expected).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenstate_selectivity_rate() {
        // Record fixed at a_m = 0; component at a_n = 2 decays at κ(a_n − a_m)².
        let a = HermitianOperator::diagonal(&[-1.0, 0.0, 2.0]).unwrap();
        let kappa = 0.3;
        let m = MonitoringModel::new(HermitianOperator::zero(3).unwrap(), a, kappa).unwrap();
        let psi0 = QuantumState::from_slice(&[c64(0.0, 0.), c64(1.0, 0.), c64(1.0, 0.)]).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        let run = propagate_chm_path(&m, &psi0, &constant_record(grid, 0.0).unwrap(), &ChmIntegrator::default()).unwrap();
        let (ts, ys): (Vec<f64>, Vec<f64>) = run
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| (grid.time(k), (s.amplitudes()[2].norm() / s.amplitudes()[1].norm()).ln()))
            .unzip();
        let rate = -slope(&ts, &ys);
        assert!((rate / (kappa * 4.0) - 1.0).abs() < 0.005, "rate {rate}");
    }

    fn slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        sxy / sxx
    }

    #[test]
    fn step_instability_detected() {
        let m = sz_model(HermitianOperator::zero(2).unwrap(), 1.0);
        let psi0 = QuantumState::basis(2, 0).unwrap();
        let record = constant_record(TimeGrid::new(0.0, 0.1, 2).unwrap(), 0.0).unwrap();
        let coarse = ChmIntegrator { max_substep_stiffness: 1.0, max_substeps: 1 };
        assert!(propagate_chm_path(&m, &psi0, &record, &coarse).is_ok());
        let far = constant_record(TimeGrid::new(0.0, 0.1, 2).unwrap(), 50.0).unwrap();
        assert!(matches!(propagate_chm_path(&m, &psi0, &far, &coarse), Err(Error::ResolutionMismatch { step: 0, .. })));
        let unstable = ChmIntegrator { max_substep_stiffness: 1e3, max_substeps: 1 };
        assert!(matches!(propagate_chm_path(&m, &psi0, &far, &unstable), Err(Error::NormGrowth { step: 0, .. })));
    }

    #[test]
    fn commuting_slices_have_no_trotter_error() {
        let h = HermitianOperator::diagonal(&[0.4, -0.1, 0.9]).unwrap();
        let a = HermitianOperator::diagonal(&[-1.0, 0.0, 2.0]).unwrap();
        let m = MonitoringModel::new(h.clone(), a.clone(), 0.7).unwrap();
        let record = ReadoutRecord::new(TimeGrid::new(0.0, 0.05, 4).unwrap(), vec![0.3, -1.2, 2.0, 0.5]).unwrap();
        let sliced = sliced_propagator(&m, &record).unwrap();
        let mut summed = CMatrix::zeros(3, 3);
        for &v in record.values() {
            summed += effective_hamiltonian(&m, v).unwrap().matrix().map(|z| z * c64(0.0, -0.05));
        }
        let exact = expm(&summed).unwrap();
        assert!(max_abs(&(sliced.matrix().matrix() - exact)) < 1e-13);
    }

    #[test]
    fn single_slice_definition() {
        let m = sz_model(HermitianOperator::pauli_x(), 0.8);
        let record = constant_record(TimeGrid::new(0.0, 0.1, 1).unwrap(), 0.4).unwrap();
        let sliced = sliced_propagator(&m, &record).unwrap();
        let u = unitary(&HermitianOperator::pauli_x(), 0.1).unwrap();
        let r = expm(&HermitianOperator::pauli_z().shifted_square(0.4).scale(-0.8 * 0.1)).unwrap();
        assert!(max_abs(&(sliced.matrix().matrix() - u * r)) < 1e-14);
        assert!(sliced.largest_singular_value() <= 1.0 + CONTRACTION_TOL);
    }

    #[test]
    fn contraction_enforced() {
        let record = constant_record(TimeGrid::new(0.0, 0.1, 1).unwrap(), 0.0).unwrap();
        let big = NonHermitianOperator::new(CMatrix::identity(2, 2).scale(1.1)).unwrap();
        assert!(matches!(PartialPropagator::new(big, record), Err(Error::NotContraction(_))));
    }

    #[test]
    fn unitarity_defect_examples() {
        let m = sz_model(HermitianOperator::zero(2).unwrap(), 0.3);
        assert!(generalized_unitarity_defect(&m, 0.1, 40).unwrap() <= 1e-10);
        let id = MonitoringModel::new(HermitianOperator::zero(2).unwrap(), HermitianOperator::identity(2).unwrap(), 2.5).unwrap();
        assert!(generalized_unitarity_defect(&id, 0.07, 40).unwrap() <= 1e-14);
        let three = MonitoringModel::new(HermitianOperator::zero(3).unwrap(), HermitianOperator::diagonal(&[0.0, 1.0, 3.0]).unwrap(), 1.0).unwrap();
        assert!(generalized_unitarity_defect(&three, 0.05, 40).unwrap() <= 1e-9);
        assert!(generalized_unitarity_defect(&m, 0.1, 9).is_err());
    }

    #[test]
    fn unitarity_divergence_reported() {
        // Eigenvalues so far apart relative to the Gaussian width that no
        // single-centered rule can resolve them.
        let m = MonitoringModel::new(HermitianOperator::zero(2).unwrap(), HermitianOperator::diagonal(&[-50.0, 50.0]).unwrap(), 10.0).unwrap();
        assert!(matches!(generalized_unitarity_defect(&m, 1.0, 20), Err(Error::QuadratureDivergence { .. })));
    }

    #[test]
    fn marginalized_step_dephases_exactly() {
        let m = sz_model(HermitianOperator::zero(2).unwrap(), 0.5);
        let rho0 = DensityMatrix::from_state(&QuantumState::from_slice(&[c64(FRAC_1_SQRT_2, 0.), c64(FRAC_1_SQRT_2, 0.)]).unwrap());
        let dt = 0.03;
        let states = marginalize_readouts(&m, &rho0, &TimeGrid::new(0.0, dt, 1).unwrap(), 40).unwrap();
        assert_abs_diff_eq!(states[1].matrix()[(0, 1)].re, 0.5 * (-dt).exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(states[1].population(0), 0.5, epsilon = 1e-13);
    }

    #[test]
    fn marginalized_identity_observable_is_unitary_channel() {
        let h = HermitianOperator::pauli_x();
        let m = MonitoringModel::new(h.clone(), HermitianOperator::identity(2).unwrap(), 1.0).unwrap();
        let rho0 = DensityMatrix::from_state(&QuantumState::basis(2, 0).unwrap());
        let states = marginalize_readouts(&m, &rho0, &TimeGrid::new(0.0, 0.1, 5).unwrap(), 40).unwrap();
        let u = unitary(&h, 0.5).unwrap();
        let expected = &u * rho0.matrix() * u.adjoint();
        assert!(max_abs(&(states[5].matrix() - expected)) < 1e-13);
    }

    #[test]
    fn marginalized_matches_lindblad() {
        let m = sz_model(HermitianOperator::pauli_x(), 0.5);
        let rho0 = DensityMatrix::from_state(&QuantumState::basis(2, 0).unwrap());
        let grid = TimeGrid::new(0.0, 0.01, 200).unwrap();
        let marg = marginalize_readouts(&m, &rho0, &grid, 40).unwrap();
        let lind = integrate_lindblad(&m.lindblad(), &rho0, &grid).unwrap();
        let worst = marg.iter().zip(&lind.states).map(|(a, b)| trace_distance(a, b).unwrap()).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "max trace distance {worst}");
    }
}
