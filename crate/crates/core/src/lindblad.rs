//! Nonselective evolution: ρ̇ = −i[H,ρ] − (κ/2)[A,[A,ρ]].
//!
//! The κ/2 coefficient is the calibration anchor for every other module.

use crate::error::{Error, Result};
use crate::export::{csv_table, matrix_columns, push_matrix};
use crate::hilbert::{c64, check_dims, commutator, double_commutator_raw, hermitian_defect, CMatrix, DensityMatrix, HermitianOperator};
use crate::readout::TimeGrid;

/// Eigenvalues below this abort integration.
pub const POSITIVITY_ABORT: f64 = -1e-6;

#[derive(Debug, Clone)]
pub struct LindbladModel {
    h: HermitianOperator,
    a: HermitianOperator,
    kappa: f64,
}

impl LindbladModel {
    pub fn new(h: HermitianOperator, a: HermitianOperator, kappa: f64) -> Result<Self> {
        check_dims(h.dim(), a.dim())?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        Ok(Self { h, a, kappa })
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

    fn rhs_raw(&self, rho: &CMatrix) -> CMatrix {
        let coherent = commutator(self.h.matrix(), rho).map(|z| z * c64(0.0, -1.0));
        coherent - double_commutator_raw(self.a.matrix(), rho).scale(0.5 * self.kappa)
    }
}

/// −i[H,ρ] − (κ/2)[A,[A,ρ]].
pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<CMatrix> {
    check_dims(model.dim(), rho.dim())?;
    Ok(model.rhs_raw(rho.matrix()))
}

/// States on every grid point plus integration diagnostics.
#[derive(Debug, Clone)]
pub struct LindbladTrajectory {
    pub grid: TimeGrid,
    /// `n_steps + 1` states; the first is the initial condition.
    pub states: Vec<DensityMatrix>,
    /// Largest |Tr ρ − 1| after a raw RK4 step, before renormalization.
    pub max_trace_drift: f64,
    /// Largest Hermiticity defect after a raw RK4 step.
    pub max_hermiticity_defect: f64,
}

impl LindbladTrajectory {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// CSV with columns t and Re/Im of every matrix entry, row-major.
    pub fn to_csv(&self) -> String {
        let dim = self.states[0].dim();
        let mut header = vec!["t".to_string()];
        header.extend(matrix_columns(dim));
        let rows = self.states.iter().enumerate().map(|(k, rho)| {
            let mut row = vec![self.grid.time(k)];
            push_matrix(&mut row, rho.matrix());
            row
        });
        csv_table(&header, rows)
    }
}

/// Classical RK4 with re-symmetrization and trace renormalization after each
/// step.
pub fn integrate_lindblad(model: &LindbladModel, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<LindbladTrajectory> {
    check_dims(model.dim(), rho0.dim())?;
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(rho0.clone());
    let mut rho = rho0.matrix().clone();
    let mut max_trace_drift = 0.0_f64;
    let mut max_hermiticity_defect = 0.0_f64;
    for step in 0..grid.n_steps() {
        let k1 = model.rhs_raw(&rho);
        let k2 = model.rhs_raw(&(&rho + k1.scale(0.5 * dt)));
        let k3 = model.rhs_raw(&(&rho + k2.scale(0.5 * dt)));
        let k4 = model.rhs_raw(&(&rho + k3.scale(dt)));
        let next = &rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        max_trace_drift = max_trace_drift.max((next.trace().re - 1.0).abs());
        max_hermiticity_defect = max_hermiticity_defect.max(hermitian_defect(&next).0);
        let state = DensityMatrix::renormalized(&next)?;
        let min_eigenvalue = state.min_eigenvalue();
        if min_eigenvalue < POSITIVITY_ABORT {
            return Err(Error::PositivityViolation { step, min_eigenvalue });
        }
        rho = state.matrix().clone();
        states.push(state);
    }
    Ok(LindbladTrajectory { grid: *grid, states, max_trace_drift, max_hermiticity_defect })
}

/// κ = 2ηkT for quantum Brownian motion (ħ = 1).
pub fn kappa_from_brownian(eta: f64, temperature: f64) -> Result<f64> {
    if !(eta > 0.0) || !(temperature > 0.0) {
        return Err(Error::InvalidParameter("damping and temperature must be positive".into()));
    }
    Ok(2.0 * eta * temperature)
}

/// κ = 2/(λ²τ) for position monitoring by atoms with interaction radius λ
/// and relaxation time τ.
pub fn kappa_from_atoms(lambda: f64, tau: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter("interaction radius and relaxation time must be positive".into()));
    }
    Ok(2.0 / (lambda * lambda * tau))
}
