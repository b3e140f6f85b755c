use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown label `{0}`")]
    Label(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("h is not a strict contraction (operator norm {0})")]
    NotStrictContraction(f64),

    #[error("kernel {which} is not positive definite (min eigenvalue {min_eig:e}, tolerance {tol:e})")]
    NotPositiveDefinite { which: String, min_eig: f64, tol: f64 },

    #[error("kernels are not equivalent: max block residual {0:e}")]
    NotEquivalent(f64),

    #[error("column Gram matrices of the realization differ by {0:e}")]
    GramMismatch(f64),

    #[error("V_L2 - D V_L1 is not left-invertible at `{label}` (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    NotInvertible {
        label: String,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("L is not dominated by K (min eigenvalue of K - L is {0:e})")]
    NotDominated(f64),

    #[error("Radon-Nikodym spectrum [{min:e}, {max:e}] leaves [0, 1]")]
    SpectrumOutOfRange { min: f64, max: f64 },

    #[error("L Gram matrix is numerically singular (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    SingularL { sigma_min: f64, sigma_max: f64 },

    #[error("linear system is numerically singular (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    SingularSystem { sigma_min: f64, sigma_max: f64 },

    #[error("internal invariant violated: {0}")]
    InternalInvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
