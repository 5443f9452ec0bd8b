//! Crate-wide error type.
//!
//! Each variant names the failure mode of the numerical stage that raises it;
//! messages carry the offending values so CLI output can point at the config
//! key or parameter responsible.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The potential has no interior local maximum flanked by two wells on
    /// the working window, so no two-pulse wave exists there.
    #[error("not a two-pulse potential: {0}")]
    NotTwoPulse(String),

    /// Required roots or brackets fall outside the working window.
    #[error("window too small: {0}")]
    WindowTooSmall(String),

    /// An iterative solve (Newton, bisection polish, fit) did not converge.
    #[error("convergence failure: {0}")]
    ConvergenceError(String),

    /// Adaptive quadrature exhausted its panel budget before reaching the
    /// requested tolerance.
    #[error("quadrature failure: {0}")]
    QuadratureError(String),

    /// Model evaluation is invalid (nonpositive kappa/tau, bad dimension,
    /// or an identity required by the model structure fails).
    #[error("model error: {0}")]
    ModelError(String),

    /// The finite-difference step for the Hessian is too coarse relative to
    /// the eps^2 scale of the wave; use a larger eps or the expansion route.
    #[error("Hessian step error: {0}")]
    HessianStepError(String),

    /// The action Hessian is numerically singular; the signature verdict is
    /// withheld.
    #[error("singular Hessian: {0}")]
    SingularHessian(String),

    /// The separation radius eta violates its defining sign conditions.
    #[error("eta selection error: {0}")]
    EtaError(String),

    /// The spectral gap of the constant-coefficient matrix is below floor;
    /// z is too close to the essential spectrum.
    #[error("spectral gap error: {0}")]
    GapError(String),

    /// A profile grid is too coarse for the requested interpolation accuracy.
    #[error("grid error: {0}")]
    GridError(String),

    /// The ODE integrator failed (step underflow or budget exhausted).
    #[error("integration error: {0}")]
    IntegrationError(String),

    /// Subspace shooting frames collapsed (loss of rank / conditioning).
    #[error("shooting error: {0}")]
    ShootError(String),

    /// A contour used for root counting passes too close to a zero.
    #[error("contour error: {0}")]
    ContourError(String),

    /// Soliton tail truncation cannot reach the requested tolerance.
    #[error("tail error: {0}")]
    TailError(String),

    /// Configuration parse/validation failure.
    #[error("config error: {0}")]
    ConfigError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
