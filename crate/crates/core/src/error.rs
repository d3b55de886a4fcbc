use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// L/pi is (numerically) an integer, so lambda = 0 is a resonant point.
    #[error("period L = {period} is resonant: L/pi = {ratio} is within 1e-12 of an integer")]
    GenericityViolation { period: f64, ratio: f64 },

    /// |alpha_j beta_j| is below the configured floor; `mode` is 1-based.
    #[error("gap of unstable mode {mode} is degenerate: |alpha beta| = {product:e}")]
    DegenerateGap { mode: usize, product: f64 },

    #[error("reduced Riemann matrix is numerically singular (condition estimate {condition:e})")]
    SingularReducedMatrix { condition: f64 },

    /// `mode` is 1-based.
    #[error("unstable mode {mode} has non-positive winding speed {speed}")]
    NonrecurrentMode { mode: usize, speed: f64 },

    #[error("{modes} unstable modes exceed the hypercube limit of {max}")]
    TooManyModes { modes: usize, max: usize },

    #[error("theta denominator underflow at x = {x}, t = {t}")]
    ThetaUnderflow { x: f64, t: f64 },

    /// Modes are 1-based.
    #[error("modes {j} and {k} share the same angle")]
    ModeCollision { j: usize, k: usize },

    #[error("split-step blowup at t = {t}: max |u| = {max_abs}")]
    BlowupDetected { t: f64, max_abs: f64 },

    #[error("split-step field became non-finite at t = {t}")]
    NonfiniteField { t: f64 },
}
