use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("matrix is not Hermitian: entry ({row},{col}) deviates from the conjugate of ({col},{row}) by {deviation:e}")]
    NotHermitian { row: usize, col: usize, deviation: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("expectation value has imaginary part {0:e}; operator is not Hermitian")]
    ComplexExpectation(f64),

    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("density matrix has eigenvalue {min_eigenvalue:e} below tolerance")]
    NotPositive { min_eigenvalue: f64 },

    #[error("positivity lost at step {step} (eigenvalue {min_eigenvalue:e}); reduce the time step")]
    PositivityViolation { step: usize, min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {step} unstable: relative norm growth {growth:e}")]
    NormGrowth { step: usize, growth: f64 },

    #[error("step {step}: record value {value} needs {required} substeps (limit {limit}); record resolution does not match kappa and dt")]
    ResolutionMismatch { step: usize, value: f64, required: usize, limit: usize },

    #[error("step size too large: {0}")]
    StepTooLarge(String),

    #[error("quadrature did not converge: defect {defect:e} at order {order}, {previous:e} at order {previous_order}")]
    QuadratureDivergence { order: usize, defect: f64, previous_order: usize, previous: f64 },

    #[error("operator is not a contraction: largest singular value {0}")]
    NotContraction(f64),

    #[error("operator is not diagonal in the observable eigenbasis (off-diagonal {0:e})")]
    NotDiagonal(f64),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
}

impl Error {
    /// True for failures that arise during integration rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::PositivityViolation { .. }
                | Error::NormGrowth { .. }
                | Error::ResolutionMismatch { .. }
                | Error::QuadratureDivergence { .. }
                | Error::NotContraction(_)
        )
    }
}
