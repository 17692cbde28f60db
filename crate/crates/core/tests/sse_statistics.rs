use qmeas_core::chm::MonitoringModel;
use qmeas_core::hilbert::{c64, DensityMatrix, HermitianOperator, QuantumState};
use qmeas_core::lindblad::integrate_lindblad;
use qmeas_core::readout::TimeGrid;
use qmeas_core::sse::{ensemble_average_strided, simulate_record};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn pure_measurement_collapses_with_born_weights() {
    let model = MonitoringModel::new(HermitianOperator::zero(2).unwrap(), HermitianOperator::pauli_z(), 1.0).unwrap();
    let psi0 = QuantumState::from_slice(&[c64(0.6, 0.0), c64(0.8, 0.0)]).unwrap();
    let grid = TimeGrid::new(0.0, 0.005, 1000).unwrap();
    let n = 2000;
    let finals: Vec<f64> = (0..n).map(|i| *simulate_record(&model, &psi0, &grid, 900 + i).unwrap().1.last().unwrap()).collect();

    let (m, se) = mean_and_se(&finals);
    assert!((m - (-0.28)).abs() <= 3.0 * se, "martingale mean {m} se {se}");

    let undecided = finals.iter().filter(|z| z.abs() < 0.99).count();
    assert!(undecided < n as usize / 50, "{undecided} trajectories not collapsed");
    let up = finals.iter().filter(|&&z| z > 0.0).count() as f64 / n as f64;
    let sigma = (0.36 * 0.64 / n as f64).sqrt();
    assert!((up - 0.36).abs() <= 3.0 * sigma, "frequency {up}");
}

#[test]
fn mean_readout_tracks_lindblad_expectation() {
    let kappa = 0.5;
    let model = MonitoringModel::new(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), kappa).unwrap();
    let psi0 = QuantumState::basis(2, 0).unwrap();
    let grid = TimeGrid::new(0.0, 0.02, 200).unwrap();
    let n = 4000;
    let ens = ensemble_average_strided(&model, &psi0, &grid, n, 77, 2).unwrap();
    let lind = integrate_lindblad(&model.lindblad(), &DensityMatrix::from_state(&psi0), &grid).unwrap();
    let sigma = ((1.0 + 1.0 / (4.0 * kappa * grid.dt())) / n as f64).sqrt();
    let z: Vec<f64> = ens
        .mean_record
        .iter()
        .zip(&ens.sample_steps)
        .map(|(a, &k)| (a - lind.states[k].expectation(model.observable()).unwrap()) / sigma)
        .collect();
    let chi2 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    assert!(chi2 < 1.5, "mean z^2 {chi2}");
    assert!(z.iter().all(|v| v.abs() < 4.5), "{z:?}");
}

#[test]
fn ensemble_state_stays_physical() {
    let model = MonitoringModel::new(HermitianOperator::pauli_x(), HermitianOperator::pauli_z(), 0.5).unwrap();
    let psi0 = QuantumState::basis(2, 0).unwrap();
    let grid = TimeGrid::new(0.0, 0.01, 100).unwrap();
    let ens = ensemble_average_strided(&model, &psi0, &grid, 200, 3, 10).unwrap();
    for rho in &ens.mean_rho {
        let tr = rho.population(0) + rho.population(1);
        assert!((tr - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
        assert!(rho.purity() <= 1.0 + 1e-12);
    }
}
