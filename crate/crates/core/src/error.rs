use thiserror::Error;

pub type Result<T> = std::result::Result<T, LfmError>;

/// Errors raised anywhere in the latent force model stack.
#[derive(Debug, Error)]
pub enum LfmError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hurwitz: eigenvalue {re:+e}{im:+e}i has non-negative real part")]
    NotHurwitz { re: f64, im: f64 },

    #[error(
        "Sylvester equation is singular: eigenvalue {lhs_re:+e}{lhs_im:+e}i of the left operator \
         collides with eigenvalue {rhs_re:+e}{rhs_im:+e}i of the right operator"
    )]
    SpectrumOverlap {
        lhs_re: f64,
        lhs_im: f64,
        rhs_re: f64,
        rhs_im: f64,
    },

    #[error("Riccati solver did not converge (final residual {residual:e})")]
    Convergence { residual: f64 },

    #[error("pair is not stabilizable: PBH rank test fails at eigenvalue {re:+e}{im:+e}i")]
    NotStabilizable { re: f64, im: f64 },

    #[error("spectral factorization failed: {0}")]
    Factorization(String),

    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),

    #[error("Riccati integration diverged at t = {t}")]
    Integration { t: f64 },

    #[error("hyperparameter optimization failed: {0}")]
    Optimization(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn argument(msg: impl Into<String>) -> LfmError {
    LfmError::Argument(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> LfmError {
    LfmError::Dimension(msg.into())
}
