//! Measurement readouts as piecewise-constant records on a uniform grid, the
//! Gaussian reference measure that turns ‖ψ_T‖² into a probability density,
//! and the record CSV format.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::export::csv_table;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::InvalidParameter("t0 must be finite".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid covering [0, duration] with steps no longer than `max_dt`.
    pub fn covering(duration: f64, max_dt: f64) -> Result<Self> {
        if !(duration > 0.0) || !(max_dt > 0.0) {
            return Err(Error::InvalidParameter("duration and dt must be positive".into()));
        }
        let n = (duration / max_dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(0.0, duration / n as f64, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Left edge of step `k`; `time(n_steps)` is the final time.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.t0 + (k as f64 + 0.5) * self.dt
    }

    /// The `n_steps + 1` step boundaries.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Piecewise-constant readout a(t): `values[k]` holds on [t_k, t_k + dt).
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutRecord {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ReadoutRecord {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(Error::DimensionMismatch { expected: grid.n_steps(), found: values.len() });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("readout record"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Appends `other`, which must continue this record on the same step size.
    pub fn concat(&self, other: &ReadoutRecord) -> Result<ReadoutRecord> {
        let end = self.grid.time(self.grid.n_steps());
        if (other.grid.dt() - self.grid.dt()).abs() > 1e-12 * self.grid.dt() {
            return Err(Error::InvalidParameter("records have different step sizes".into()));
        }
        if (other.grid.t0() - end).abs() > 1e-9 * end.abs().max(1.0) {
            return Err(Error::InvalidParameter("second record does not start where the first ends".into()));
        }
        let grid = TimeGrid::new(self.grid.t0(), self.grid.dt(), self.grid.n_steps() + other.grid.n_steps())?;
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        ReadoutRecord::new(grid, values)
    }
}

/// Log of the probability density of a record relative to the reference
/// measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutDensity {
    pub log_density: f64,
}

pub fn constant_record(grid: TimeGrid, a: f64) -> Result<ReadoutRecord> {
    if !a.is_finite() {
        return Err(Error::NonFinite("constant record value"));
    }
    ReadoutRecord::new(grid, vec![a; grid.n_steps()])
}

/// Per-step normalization of the readout measure: √(2κ·dt/π) da per step,
/// under which exp(−κ(A−a)²dt) squared integrates to the identity.
pub fn step_measure(kappa: f64, dt: f64) -> f64 {
    (2.0 * kappa * dt / PI).sqrt()
}

/// log Π_k √(2κ·dt/π).
pub fn reference_log_weight(record: &ReadoutRecord, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter("kappa must be positive".into()));
    }
    let dt = record.grid().dt();
    Ok(record.grid().n_steps() as f64 * 0.5 * (2.0 * kappa * dt / PI).ln())
}

/// CSV with header `t,a` and one row per step midpoint.
pub fn serialize_record(record: &ReadoutRecord) -> String {
    let grid = record.grid();
    csv_table(
        &["t".to_string(), "a".to_string()],
        record.values().iter().enumerate().map(|(k, &a)| [grid.midpoint(k), a]),
    )
}

/// Parses the `t,a` format. With `dt = None` the step is inferred from the
/// first two rows.
pub fn parse_record(text: &str, dt: Option<f64>) -> Result<ReadoutRecord> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { row: 1, message: e.to_string() })?.clone();
    if header.len() != 2 || &header[0] != "t" || &header[1] != "a" {
        return Err(Error::Parse { row: 1, message: format!("expected header \"t,a\", found {:?}", header.as_slice()) });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse { row, message: format!("expected 2 fields, found {}", rec.len()) });
        }
        let parse = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { row, message: format!("invalid {what} value {s:?}") })
        };
        times.push(parse(&rec[0], "time")?);
        values.push(parse(&rec[1], "readout")?);
        rows.push(row);
    }
    if times.is_empty() {
        return Err(Error::Parse { row: 2, message: "record has no rows".into() });
    }
    for k in 1..times.len() {
        if times[k] <= times[k - 1] {
            return Err(Error::Parse { row: rows[k], message: "times are not increasing".into() });
        }
    }
    let dt = match dt {
        Some(dt) => dt,
        None if times.len() >= 2 => times[1] - times[0],
        None => {
            return Err(Error::Parse { row: rows[0], message: "cannot infer dt from a single row".into() });
        }
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parse { row: rows[0], message: "dt must be positive".into() });
    }
    let t0 = times[0] - 0.5 * dt;
    let grid = TimeGrid::new(t0, dt, times.len()).map_err(|e| Error::Parse { row: rows[0], message: e.to_string() })?;
    for (k, &t) in times.iter().enumerate() {
        let expected = grid.midpoint(k);
        if (t - expected).abs() > 1e-9 * expected.abs().max(dt) {
            return Err(Error::Parse {
                row: rows[k],
                message: format!("time {t} does not match grid midpoint {expected} for dt = {dt}"),
            });
        }
    }
    ReadoutRecord::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{c64, CMatrix, HermitianOperator};
    use crate::quadrature::GaussHermite;
    use proptest::prelude::*;

    #[test]
    fn constant_records() {
        let g4 = TimeGrid::new(0.0, 0.1, 4).unwrap();
        assert_eq!(constant_record(g4, 1.0).unwrap().values(), &[1.0; 4]);
        let g1 = TimeGrid::new(0.0, 0.1, 1).unwrap();
        assert_eq!(constant_record(g1, 0.0).unwrap().values(), &[0.0]);
        let g3 = TimeGrid::new(0.0, 0.1, 3).unwrap();
        assert_eq!(constant_record(g3, -2.5).unwrap().values(), &[-2.5; 3]);
        assert!(constant_record(g3, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 0).is_err());
        let g = TimeGrid::covering(2.0, 0.3).unwrap();
        assert_eq!(g.n_steps(), 7);
        assert!((g.duration() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn reference_weight_examples() {
        let one = constant_record(TimeGrid::new(0.0, PI / 2.0, 1).unwrap(), 0.3).unwrap();
        assert!(reference_log_weight(&one, 1.0).unwrap().abs() < 1e-15);
        let many = constant_record(TimeGrid::new(0.0, 0.2, 7).unwrap(), 0.0).unwrap();
        let expected = 7.0 * 0.5 * (2.0 * 0.4 * 0.2 / PI).ln();
        assert!((reference_log_weight(&many, 0.4).unwrap() - expected).abs() < 1e-14);
        assert!(reference_log_weight(&many, 0.0).is_err());
        assert!(reference_log_weight(&many, -1.0).is_err());
    }

    #[test]
    fn reference_weight_additive() {
        let a = ReadoutRecord::new(TimeGrid::new(0.0, 0.1, 3).unwrap(), vec![0.1, 0.2, 0.3]).unwrap();
        let b = ReadoutRecord::new(TimeGrid::new(0.3, 0.1, 5).unwrap(), vec![1.0; 5]).unwrap();
        let ab = a.concat(&b).unwrap();
        let sum = reference_log_weight(&a, 0.7).unwrap() + reference_log_weight(&b, 0.7).unwrap();
        assert!((reference_log_weight(&ab, 0.7).unwrap() - sum).abs() < 1e-13);
        let gap = ReadoutRecord::new(TimeGrid::new(0.5, 0.1, 1).unwrap(), vec![1.0]).unwrap();
        assert!(a.concat(&gap).is_err());
    }

    /// ∫ da √(2κdt/π) exp(−2κ(A−a)²dt) for Hermitian A, by quadrature.
    fn completeness_defect(a: &HermitianOperator, kappa: f64, dt: f64, order: usize) -> f64 {
        let gh = GaussHermite::new(order).unwrap();
        let spec = a.spectrum();
        let center = 0.5 * (spec.values[0] + spec.values[spec.values.len() - 1]);
        let scale = (2.0 * kappa * dt).sqrt();
        let n = a.dim();
        let mut total = CMatrix::zeros(n, n);
        for (x, w) in gh.unweighted() {
            let av = center + x / scale;
            let r2 = spec.apply_fn(|l| c64((-2.0 * kappa * dt * (l - av) * (l - av)).exp(), 0.0));
            total += r2.scale(w * step_measure(kappa, dt) / scale);
        }
        (total - CMatrix::identity(n, n)).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    #[test]
    fn gaussian_completeness_sigma_z() {
        let d = completeness_defect(&HermitianOperator::pauli_z(), 0.3, 0.1, 40);
        assert!(d < 1e-10, "defect {d}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gaussian_completeness_random_hermitian(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
            kappa in 0.05f64..5.0,
            dt in 0.01f64..0.2,
        ) {
            let m = CMatrix::from_fn(3, 3, |i, j| {
                let (r, s) = (entries[3 * i + j], entries[3 * j + i]);
                if i == j { c64(r, 0.0) } else if i < j { c64(r, s) } else { c64(s, -r) }
            });
            let a = HermitianOperator::new(m).unwrap();
            prop_assert!(completeness_defect(&a, kappa, dt, 60) <= 1e-8);
        }

        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..200), dt in 1e-4f64..2.0, t0 in -10.0f64..10.0) {
            let grid = TimeGrid::new(t0, dt, values.len()).unwrap();
            let record = ReadoutRecord::new(grid, values.clone()).unwrap();
            let parsed = parse_record(&serialize_record(&record), Some(dt)).unwrap();
            prop_assert_eq!(parsed.values(), &values[..]);
            prop_assert!((parsed.grid().t0() - t0).abs() <= 1e-12 * t0.abs().max(1.0));
        }
    }

    #[test]
    fn csv_format_and_errors() {
        let record = ReadoutRecord::new(TimeGrid::new(0.0, 0.5, 1).unwrap(), vec![1.0]).unwrap();
        assert_eq!(serialize_record(&record), "t,a\n0.25,1\n");

        match parse_record("t,a\n0.25,1\n0.30,2\n", Some(0.5)) {
            Err(Error::Parse { row: 3, .. }) => {}
            other => panic!("expected grid mismatch on row 3, got {other:?}"),
        }
        assert!(matches!(parse_record("t,a\n0.25,1\n0.2,2\n", None), Err(Error::Parse { row: 3, .. })));
        assert!(matches!(parse_record("t,a\n0.25,x\n", Some(0.5)), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(parse_record("time,a\n0.25,1\n", Some(0.5)), Err(Error::Parse { row: 1, .. })));
        assert!(matches!(parse_record("t,a\n0.25,1\n", None), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_record("t,a\n0.05,1\n0.15,2\n0.30,3\n", None),
            Err(Error::Parse { row: 4, .. })
        ));
        let inferred = parse_record("t,a\n0.05,1\n0.15,2\n0.25,3\n", None).unwrap();
        assert!((inferred.grid().dt() - 0.1).abs() < 1e-15);
        assert_eq!(inferred.values(), &[1.0, 2.0, 3.0]);
    }
}
